use super::EnvironmentMap;
use crate::error::{Error, Result};

pub const PE_DIMS: usize = 64;
/// RGB followed by the positional encoding.
pub const TOKEN_DIMS: usize = 3 + PE_DIMS;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvToken {
    pub rgb: [f64; 3],
    pub row: usize,
    pub col: usize,
    pub pe: [f64; PE_DIMS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvTokens {
    pub rows: usize,
    pub cols: usize,
    pub tokens: Vec<EnvToken>,
}

impl EnvTokens {
    /// Row-major `[tokens, 67]` matrix of `[rgb, pe]`.
    pub fn to_matrix_f32(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.tokens.len() * TOKEN_DIMS);
        for t in &self.tokens {
            out.extend(t.rgb.iter().map(|v| *v as f32));
            out.extend(t.pe.iter().map(|v| *v as f32));
        }
        out
    }
}

/// Sinusoidal encoding of a 2D grid coordinate: 32 dimensions for the row,
/// 32 for the column, interleaved sin/cos with geometric frequencies.
pub fn positional_encoding(row: usize, col: usize) -> [f64; PE_DIMS] {
    let half = PE_DIMS / 2;
    let mut pe = [0.0; PE_DIMS];
    for (axis, pos) in [row as f64, col as f64].into_iter().enumerate() {
        for i in 0..half / 2 {
            let freq = 10000f64.powf(-((2 * i) as f64) / half as f64);
            pe[axis * half + 2 * i] = (pos * freq).sin();
            pe[axis * half + 2 * i + 1] = (pos * freq).cos();
        }
    }
    pe
}

/// Box-filters the environment to `rows × cols` tokens.
pub fn env_tokens(env: &EnvironmentMap, rows: usize, cols: usize) -> Result<EnvTokens> {
    if rows == 0 || cols == 0 || env.rows() % rows != 0 || env.cols() % cols != 0 {
        return Err(Error::invalid(format!(
            "token grid {rows}x{cols} does not divide environment {}x{}",
            env.rows(),
            env.cols()
        )));
    }
    let (br, bc) = (env.rows() / rows, env.cols() / cols);
    let area = (br * bc) as f64;
    let mut tokens = Vec::with_capacity(rows * cols);
    for row in 0..rows {
        for col in 0..cols {
            let mut rgb = [0.0; 3];
            for r in row * br..(row + 1) * br {
                for c in col * bc..(col + 1) * bc {
                    let p = env.pixel(r, c);
                    for k in 0..3 {
                        rgb[k] += p[k];
                    }
                }
            }
            tokens.push(EnvToken {
                rgb: rgb.map(|v| v / area),
                row,
                col,
                pe: positional_encoding(row, col),
            });
        }
    }
    Ok(EnvTokens { rows, cols, tokens })
}

//! Newline-delimited JSON messages exchanged with external scorer processes.

use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ImageMode {
    #[default]
    Path,
    Inline,
}

/// Parent to child.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Request {
    Hello {
        version: u32,
        image_mode: ImageMode,
    },
    Score {
        id: u64,
        prompt: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        image_path: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        image_b64: Option<String>,
    },
    Bye,
}

/// Child to parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Response {
    Hello {
        version: u32,
        #[serde(default)]
        name: String,
    },
    Result {
        id: u64,
        /// `None` when the child sent a non-finite number.
        score: Option<f64>,
    },
    Error {
        #[serde(default)]
        id: Option<u64>,
        message: String,
    },
    Fatal {
        message: String,
    },
}

impl Request {
    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("requests always serialize");
        line.push('\n');
        line
    }
}

impl Response {
    /// Parses one line. Bare `NaN`/`Infinity` tokens, which some JSON
    /// encoders emit for non-finite floats, decode to a missing score.
    pub fn parse(line: &str) -> Result<Response, serde_json::Error> {
        match serde_json::from_str(line) {
            Ok(r) => Ok(r),
            Err(e) => {
                let patched = line
                    .replace("-Infinity", "null")
                    .replace("Infinity", "null")
                    .replace("NaN", "null");
                if patched == line {
                    Err(e)
                } else {
                    serde_json::from_str(&patched).map_err(|_| e)
                }
            }
        }
    }
}

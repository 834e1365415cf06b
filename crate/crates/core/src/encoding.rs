//! Single-byte text decoding for snapshot files.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Text encodings accepted for snapshot input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum TextEncoding {
    /// The loader default for SIVEP-Gripe snapshots.
    #[default]
    #[serde(rename = "ISO-8859-2")]
    Iso8859_2,
    #[serde(rename = "ISO-8859-1")]
    Latin1,
    #[serde(rename = "windows-1252")]
    Windows1252,
    #[serde(rename = "UTF-8")]
    Utf8,
}

impl TextEncoding {
    pub const ALL: [TextEncoding; 4] = [
        TextEncoding::Iso8859_2,
        TextEncoding::Latin1,
        TextEncoding::Windows1252,
        TextEncoding::Utf8,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TextEncoding::Iso8859_2 => "ISO-8859-2",
            TextEncoding::Latin1 => "ISO-8859-1",
            TextEncoding::Windows1252 => "windows-1252",
            TextEncoding::Utf8 => "UTF-8",
        }
    }

    /// Decodes raw field bytes. ASCII input is borrowed without copying.
    pub fn decode<'a>(self, bytes: &'a [u8]) -> Cow<'a, str> {
        if bytes.is_ascii() {
            // ASCII is a subset of every supported encoding.
            return Cow::Borrowed(std::str::from_utf8(bytes).expect("ascii is utf-8"));
        }
        match self {
            // ISO-8859-1 maps each byte to the code point of the same value.
            TextEncoding::Latin1 => Cow::Owned(bytes.iter().map(|&b| b as char).collect()),
            TextEncoding::Iso8859_2 => encoding_rs::ISO_8859_2.decode_without_bom_handling(bytes).0,
            TextEncoding::Windows1252 => {
                encoding_rs::WINDOWS_1252
                    .decode_without_bom_handling(bytes)
                    .0
            }
            TextEncoding::Utf8 => String::from_utf8_lossy(bytes),
        }
    }

    /// Encodes text for writing. Returns `None` when a character has no
    /// representation in the target encoding.
    pub fn encode<'a>(self, text: &'a str) -> Option<Cow<'a, [u8]>> {
        if text.is_ascii() {
            return Some(Cow::Borrowed(text.as_bytes()));
        }
        match self {
            TextEncoding::Utf8 => Some(Cow::Borrowed(text.as_bytes())),
            TextEncoding::Latin1 => text
                .chars()
                .map(|c| u8::try_from(u32::from(c)).ok())
                .collect::<Option<Vec<u8>>>()
                .map(Cow::Owned),
            TextEncoding::Iso8859_2 => encode_strict(encoding_rs::ISO_8859_2, text),
            TextEncoding::Windows1252 => encode_strict(encoding_rs::WINDOWS_1252, text),
        }
    }
}

fn encode_strict<'a>(enc: &'static encoding_rs::Encoding, text: &'a str) -> Option<Cow<'a, [u8]>> {
    let (bytes, _, had_errors) = enc.encode(text);
    if had_errors {
        None
    } else {
        Some(bytes)
    }
}

impl fmt::Display for TextEncoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TextEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        match norm.as_str() {
            "iso-8859-2" | "iso8859-2" | "latin2" | "latin-2" => Ok(TextEncoding::Iso8859_2),
            "iso-8859-1" | "iso8859-1" | "latin1" | "latin-1" => Ok(TextEncoding::Latin1),
            "windows-1252" | "cp1252" => Ok(TextEncoding::Windows1252),
            "utf-8" | "utf8" => Ok(TextEncoding::Utf8),
            _ => Err(Error::Config(format!(
                "unsupported encoding {s:?} (supported: ISO-8859-2, ISO-8859-1, windows-1252, UTF-8)"
            ))),
        }
    }
}

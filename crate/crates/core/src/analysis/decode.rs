use super::diagnostics::{codes, Diagnostic};

pub(super) struct Decoded {
    pub text: String,
    pub warnings: Vec<Diagnostic>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Charset {
    Utf8,
    Utf16Le,
    Utf16Be,
    Latin1,
    Ascii,
}

fn charset_from_label(label: &str) -> Option<Charset> {
    match label
        .trim()
        .trim_matches(['"', '\''])
        .to_ascii_lowercase()
        .as_str()
    {
        "utf-8" | "utf8" => Some(Charset::Utf8),
        "utf-16" | "utf-16le" => Some(Charset::Utf16Le),
        "utf-16be" => Some(Charset::Utf16Be),
        "iso-8859-1" | "latin1" | "latin-1" | "l1" | "iso_8859-1" => Some(Charset::Latin1),
        "us-ascii" | "ascii" => Some(Charset::Ascii),
        _ => None,
    }
}

/// Pulls `encoding="..."` out of a leading `<?xml ...?>` declaration.
fn declared_encoding(head: &[u8]) -> Option<String> {
    let head = std::str::from_utf8(&head[..head.len().min(256)])
        .ok()
        .or_else(|| {
            // A truncated multibyte sequence at the window edge; retry on the valid prefix.
            let cut = (0..head.len().min(256))
                .rev()
                .find(|&i| std::str::from_utf8(&head[..i]).is_ok())?;
            std::str::from_utf8(&head[..cut]).ok()
        })?;
    let decl = head.strip_prefix("<?xml")?;
    let decl = &decl[..decl.find("?>")?];
    let at = decl.find("encoding")?;
    let rest = decl[at + "encoding".len()..]
        .trim_start()
        .strip_prefix('=')?
        .trim_start();
    let quote = rest.chars().next().filter(|c| *c == '"' || *c == '\'')?;
    let value = &rest[1..];
    Some(value[..value.find(quote)?].to_string())
}

fn content_type_charset(content_type: &str) -> Option<String> {
    content_type.split(';').skip(1).find_map(|param| {
        let (k, v) = param.split_once('=')?;
        k.trim()
            .eq_ignore_ascii_case("charset")
            .then(|| v.trim().trim_matches(['"', '\'']).to_string())
    })
}

fn utf16(bytes: &[u8], little_endian: bool) -> Option<String> {
    if !bytes.len().is_multiple_of(2) {
        return None;
    }
    let units = bytes.chunks_exact(2).map(|c| {
        if little_endian {
            u16::from_le_bytes([c[0], c[1]])
        } else {
            u16::from_be_bytes([c[0], c[1]])
        }
    });
    char::decode_utf16(units)
        .collect::<Result<String, _>>()
        .ok()
}

/// Turns body bytes into text according to the BOM or XML declaration,
/// defaulting to UTF-8.
pub(super) fn decode_body(
    body: &[u8],
    content_type: Option<&str>,
) -> Result<Decoded, Vec<Diagnostic>> {
    let mut warnings = Vec::new();
    let (charset, payload, declared_label) = if let Some(rest) = body.strip_prefix(b"\xEF\xBB\xBF")
    {
        (Charset::Utf8, rest, Some("UTF-8".to_string()))
    } else if let Some(rest) = body.strip_prefix(b"\xFF\xFE") {
        (Charset::Utf16Le, rest, Some("UTF-16".to_string()))
    } else if let Some(rest) = body.strip_prefix(b"\xFE\xFF") {
        (Charset::Utf16Be, rest, Some("UTF-16".to_string()))
    } else {
        match declared_encoding(body) {
            Some(label) => match charset_from_label(&label) {
                Some(cs @ (Charset::Utf16Le | Charset::Utf16Be)) => {
                    // A UTF-16 declaration readable as ASCII means the bytes are not UTF-16.
                    return Err(vec![Diagnostic::fatal(
                        codes::ENCODING_MISMATCH,
                        format!("The XML declaration says {label} but the body is not UTF-16 encoded ({cs:?} without a byte-order mark)."),
                    )]);
                }
                Some(cs) => (cs, body, Some(label)),
                None => {
                    return Err(vec![Diagnostic::fatal(
                        codes::UNSUPPORTED_ENCODING,
                        format!("The declared encoding {label:?} is not supported."),
                    )])
                }
            },
            None => (Charset::Utf8, body, None),
        }
    };

    let text = match charset {
        Charset::Utf8 => match std::str::from_utf8(payload) {
            Ok(s) => s.to_string(),
            Err(e) => {
                let offset = e.valid_up_to();
                let line = payload[..offset].iter().filter(|b| **b == b'\n').count() as u32 + 1;
                let col = payload[..offset]
                    .iter()
                    .rev()
                    .take_while(|b| **b != b'\n')
                    .count() as u32
                    + 1;
                let declared = declared_label.as_deref().unwrap_or("UTF-8 (the default)");
                return Err(vec![Diagnostic::fatal(
                    codes::ENCODING_MISMATCH,
                    format!("The body is declared as {declared} but contains bytes that are not valid UTF-8."),
                )
                .at(line, col)
                .with_detail(format!("invalid byte 0x{:02X} at offset {offset}", payload[offset]))]);
            }
        },
        Charset::Utf16Le | Charset::Utf16Be => utf16(payload, charset == Charset::Utf16Le)
            .ok_or_else(|| {
                vec![Diagnostic::fatal(
                    codes::ENCODING_MISMATCH,
                    "The body has a UTF-16 byte-order mark but is not valid UTF-16.",
                )]
            })?,
        Charset::Latin1 => payload.iter().map(|&b| b as char).collect(),
        Charset::Ascii => {
            if let Some(pos) = payload.iter().position(|b| !b.is_ascii()) {
                return Err(vec![Diagnostic::fatal(
                    codes::ENCODING_MISMATCH,
                    "The body is declared as US-ASCII but contains non-ASCII bytes.",
                )
                .with_detail(format!("byte 0x{:02X} at offset {pos}", payload[pos]))]);
            }
            String::from_utf8_lossy(payload).into_owned()
        }
    };

    if let Some(header_label) = content_type.and_then(content_type_charset) {
        let header_cs = charset_from_label(&header_label);
        let same_family = |a: Option<Charset>, b: Charset| match (a, b) {
            (Some(Charset::Utf16Le | Charset::Utf16Be), Charset::Utf16Le | Charset::Utf16Be) => {
                true
            }
            (Some(x), y) => x == y,
            (None, _) => false,
        };
        if !same_family(header_cs, charset) {
            let declared = declared_label.unwrap_or_else(|| "UTF-8 (by default)".to_string());
            warnings.push(Diagnostic::warning(
                codes::ENCODING_MISMATCH,
                format!("The Content-Type header says charset={header_label} but the XML itself is {declared}."),
            ));
        }
    }

    Ok(Decoded { text, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_declared_encoding() {
        assert_eq!(
            declared_encoding(br#"<?xml version="1.0" encoding="ISO-8859-1"?><a/>"#).as_deref(),
            Some("ISO-8859-1")
        );
        assert_eq!(
            declared_encoding(b"<?xml version='1.0' encoding = 'utf-8' ?>").as_deref(),
            Some("utf-8")
        );
        assert_eq!(declared_encoding(b"<?xml version='1.0'?>"), None);
        assert_eq!(declared_encoding(b"<a/>"), None);
    }

    #[test]
    fn latin1_bodies_decode() {
        let body = b"<?xml version=\"1.0\" encoding=\"ISO-8859-1\"?><a>caf\xE9</a>";
        let d = decode_body(body, None).unwrap();
        assert!(d.text.ends_with("<a>caf\u{e9}</a>"));
        assert!(d.warnings.is_empty());
    }

    #[test]
    fn invalid_utf8_is_fatal_with_location() {
        let body = b"<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<a>caf\xE9</a>";
        let diags = decode_body(body, None).err().unwrap();
        assert_eq!(diags[0].code, codes::ENCODING_MISMATCH);
        assert_eq!(diags[0].location.map(|l| l.line), Some(2));
    }

    #[test]
    fn charset_conflict_is_a_warning() {
        let body = b"<?xml version=\"1.0\" encoding=\"UTF-8\"?><a/>";
        let d = decode_body(body, Some("text/xml; charset=ISO-8859-1")).unwrap();
        assert_eq!(d.warnings.len(), 1);
        assert_eq!(d.warnings[0].code, codes::ENCODING_MISMATCH);
        let d = decode_body(body, Some("text/xml; charset=\"utf-8\"")).unwrap();
        assert!(d.warnings.is_empty());
        let d = decode_body(body, Some("text/xml")).unwrap();
        assert!(d.warnings.is_empty());
    }

    #[test]
    fn utf16_with_bom() {
        let mut body = vec![0xFF, 0xFE];
        for u in "<a>x</a>".encode_utf16() {
            body.extend_from_slice(&u.to_le_bytes());
        }
        assert_eq!(decode_body(&body, None).unwrap().text, "<a>x</a>");
    }
}

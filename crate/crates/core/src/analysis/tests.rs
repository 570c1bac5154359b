use super::*;
use crate::model::{Granularity, OaiErrorCode, Verb};

const HEAD: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<OAI-PMH xmlns="http://www.openarchives.org/OAI/2.0/">
  <responseDate>2004-03-01T10:00:00Z</responseDate>"#;

fn identify_body(inner: &str) -> String {
    format!(
        r#"{HEAD}
  <request verb="Identify">http://example.org/oai</request>
  <Identify>{inner}</Identify>
</OAI-PMH>"#
    )
}

const IDENTIFY_OK: &str = r#"
    <repositoryName>Example</repositoryName>
    <baseURL>http://example.org/oai</baseURL>
    <protocolVersion>2.0</protocolVersion>
    <adminEmail>admin@example.org</adminEmail>
    <earliestDatestamp>2002-06-01T00:00:00Z</earliestDatestamp>
    <deletedRecord>no</deletedRecord>
    <granularity>YYYY-MM-DDThh:mm:ssZ</granularity>"#;

fn codes_of(diags: &[Diagnostic]) -> Vec<&str> {
    diags.iter().map(|d| d.code.as_str()).collect()
}

#[test]
fn identify_happy_path() {
    let env = analyze(identify_body(IDENTIFY_OK).as_bytes(), Verb::Identify).unwrap();
    assert_eq!(env.response_date.render(), "2004-03-01T10:00:00Z");
    assert_eq!(
        env.request_echo.attributes.get("verb").map(String::as_str),
        Some("Identify")
    );
    assert_eq!(env.request_echo.text, "http://example.org/oai");
    let info = extract_identify(&env).unwrap();
    assert_eq!(info.repository_name, "Example");
    assert_eq!(info.protocol_version, "2.0");
    assert_eq!(info.granularity, Granularity::Second);
    assert_eq!(info.admin_emails, vec!["admin@example.org"]);
    assert_eq!(info.earliest_datestamp.render(), "2002-06-01T00:00:00Z");
}

#[test]
fn identify_missing_earliest_datestamp() {
    let inner = IDENTIFY_OK.replace(
        "<earliestDatestamp>2002-06-01T00:00:00Z</earliestDatestamp>",
        "",
    );
    let env = analyze(identify_body(&inner).as_bytes(), Verb::Identify).unwrap();
    let diags = extract_identify(&env).unwrap_err();
    assert!(
        codes_of(&diags).contains(&codes::MISSING_ELEMENT),
        "{diags:?}"
    );
}

#[test]
fn identify_old_protocol_version_still_extracts() {
    let inner = IDENTIFY_OK.replace(">2.0<", ">1.1<");
    let env = analyze(identify_body(&inner).as_bytes(), Verb::Identify).unwrap();
    assert_eq!(extract_identify(&env).unwrap().protocol_version, "1.1");
}

#[test]
fn identify_elements_out_of_order() {
    let inner = r#"
    <baseURL>http://example.org/oai</baseURL>
    <repositoryName>Example</repositoryName>
    <protocolVersion>2.0</protocolVersion>
    <adminEmail>admin@example.org</adminEmail>
    <earliestDatestamp>2002-06-01</earliestDatestamp>
    <deletedRecord>no</deletedRecord>
    <granularity>YYYY-MM-DD</granularity>"#;
    let env = analyze(identify_body(inner).as_bytes(), Verb::Identify).unwrap();
    let diags = extract_identify(&env).unwrap_err();
    assert_eq!(codes_of(&diags), vec![codes::ELEMENT_OUT_OF_ORDER]);
}

#[test]
fn identify_duplicate_and_bad_values() {
    let inner = IDENTIFY_OK
        .replace(
            "<deletedRecord>no</deletedRecord>",
            "<deletedRecord>sometimes</deletedRecord>",
        )
        .replace(
            "<repositoryName>Example</repositoryName>",
            "<repositoryName>Example</repositoryName><repositoryName>Again</repositoryName>",
        );
    let env = analyze(identify_body(&inner).as_bytes(), Verb::Identify).unwrap();
    let diags = extract_identify(&env).unwrap_err();
    let c = codes_of(&diags);
    assert!(
        c.contains(&codes::DUPLICATE_ELEMENT) && c.contains(&codes::BAD_VALUE),
        "{c:?}"
    );
}

#[test]
fn identify_granularity_mismatch_extracts() {
    let inner = IDENTIFY_OK.replace("2002-06-01T00:00:00Z", "2002-06-01");
    let env = analyze(identify_body(&inner).as_bytes(), Verb::Identify).unwrap();
    let info = extract_identify(&env).unwrap();
    assert_eq!(info.earliest_datestamp.granularity(), Granularity::Day);
    assert_eq!(info.granularity, Granularity::Second);
}

#[test]
fn stylesheet_before_declaration() {
    let body = format!(
        "<?xml-stylesheet type=\"text/xsl\" href=\"oai2.xsl\"?>\n{}",
        identify_body(IDENTIFY_OK)
    );
    let diags = analyze(body.as_bytes(), Verb::Identify).unwrap_err();
    assert_eq!(diags[0].severity, Severity::Fatal);
    assert_eq!(diags[0].code, codes::STYLESHEET_PI);
    assert!(diags[0].hint.as_deref().unwrap().contains("stylesheet"));
    assert!(diags[0].detail.is_some());
}

#[test]
fn well_formed_stylesheet_is_accepted() {
    let body = identify_body(IDENTIFY_OK).replacen(
        "?>\n",
        "?>\n<?xml-stylesheet type=\"text/xsl\" href=\"oai2.xsl\"?>\n",
        1,
    );
    assert!(analyze(body.as_bytes(), Verb::Identify).is_ok());
}

#[test]
fn unescaped_quote_in_request_attribute() {
    let body = format!(
        r#"{HEAD}
  <request verb="GetRecord" identifier="invalid"id" metadataPrefix="oai_dc">http://example.org/oai</request>
  <error code="idDoesNotExist">no such item</error>
</OAI-PMH>"#
    );
    let diags = analyze(body.as_bytes(), Verb::GetRecord).unwrap_err();
    assert_eq!(diags.len(), 1);
    assert_eq!(diags[0].severity, Severity::Fatal);
    assert_eq!(diags[0].code, codes::UNESCAPED_QUOTE);
    assert_eq!(diags[0].location.map(|l| l.line), Some(4));
}

#[test]
fn escaped_quote_is_fine() {
    let body = format!(
        r#"{HEAD}
  <request verb="GetRecord" identifier="invalid&quot;id" metadataPrefix="oai_dc">http://example.org/oai</request>
  <error code="idDoesNotExist">no such item</error>
</OAI-PMH>"#
    );
    let env = analyze(body.as_bytes(), Verb::GetRecord).unwrap();
    assert_eq!(
        env.request_echo
            .attributes
            .get("identifier")
            .map(String::as_str),
        Some("invalid\"id")
    );
    assert!(env.has_error_code(OaiErrorCode::IdDoesNotExist));
}

#[test]
fn html_error_page() {
    let body = "<!DOCTYPE html>\n<html><head><title>500 Internal Server Error</title></head><body>oops</body></html>";
    let diags = analyze(body.as_bytes(), Verb::Identify).unwrap_err();
    assert_eq!(diags[0].code, codes::NOT_XML);
    assert_eq!(diags[0].severity, Severity::Fatal);
    assert!(diags[0].hint.as_deref().unwrap().contains("error page"));
    assert_eq!(diags[1].code, codes::HTML_ERROR_PAGE);
    assert!(diags[1].message.contains("500 Internal Server Error"));
}

#[test]
fn plain_text_and_empty() {
    let d = analyze(b"Service temporarily down", Verb::Identify).unwrap_err();
    assert_eq!(d[0].code, codes::NOT_XML);
    let d = analyze(b"  \n ", Verb::Identify).unwrap_err();
    assert_eq!(d[0].code, codes::EMPTY_BODY);
}

#[test]
fn common_well_formedness_errors() {
    let cases = [
        (
            identify_body(IDENTIFY_OK).replace("Example<", "R&D<"),
            codes::UNESCAPED_AMPERSAND,
        ),
        (
            identify_body(IDENTIFY_OK).replace("Example<", "Caf&eacute;<"),
            codes::UNESCAPED_AMPERSAND,
        ),
        (
            identify_body(IDENTIFY_OK).replace("</repositoryName>", "</repositoryname>"),
            codes::MISMATCHED_TAG,
        ),
        (
            identify_body(IDENTIFY_OK).replace("</OAI-PMH>", ""),
            codes::TRUNCATED,
        ),
        (
            format!("\n  {}", identify_body(IDENTIFY_OK)),
            codes::MISPLACED_DECLARATION,
        ),
        (
            identify_body(IDENTIFY_OK).replace("Example<", "Ex\u{1}ample<"),
            codes::INVALID_CHARACTER,
        ),
        (
            identify_body(IDENTIFY_OK)
                .replace("?>\n", "?>\n<!DOCTYPE OAI-PMH [<!ENTITY x \"y\">]>\n"),
            codes::DTD_NOT_ALLOWED,
        ),
    ];
    for (body, code) in cases {
        let diags = analyze(body.as_bytes(), Verb::Identify).unwrap_err();
        assert_eq!(diags[0].code, code, "{diags:?}");
        assert!(diags[0].hint.is_some(), "{code} must carry a hint");
    }
}

#[test]
fn wrong_namespace() {
    let body = identify_body(IDENTIFY_OK).replace(
        "xmlns=\"http://www.openarchives.org/OAI/2.0/\"",
        "xmlns=\"http://www.openarchives.org/OAI/1.1/OAI_Identify\"",
    );
    let diags = analyze(body.as_bytes(), Verb::Identify).unwrap_err();
    assert_eq!(diags[0].code, codes::BAD_NAMESPACE);
    let body =
        identify_body(IDENTIFY_OK).replace(" xmlns=\"http://www.openarchives.org/OAI/2.0/\"", "");
    let diags = analyze(body.as_bytes(), Verb::Identify).unwrap_err();
    assert_eq!(diags[0].code, codes::BAD_NAMESPACE);
}

#[test]
fn envelope_order_and_cardinality() {
    let swapped = identify_body(IDENTIFY_OK).replace(
        "<responseDate>2004-03-01T10:00:00Z</responseDate>\n  <request verb=\"Identify\">http://example.org/oai</request>",
        "<request verb=\"Identify\">http://example.org/oai</request>\n  <responseDate>2004-03-01T10:00:00Z</responseDate>",
    );
    let diags = analyze(swapped.as_bytes(), Verb::Identify).unwrap_err();
    assert_eq!(codes_of(&diags), vec![codes::ELEMENT_OUT_OF_ORDER]);

    let no_date =
        identify_body(IDENTIFY_OK).replace("<responseDate>2004-03-01T10:00:00Z</responseDate>", "");
    let diags = analyze(no_date.as_bytes(), Verb::Identify).unwrap_err();
    assert_eq!(codes_of(&diags), vec![codes::MISSING_ELEMENT]);

    let day_date = identify_body(IDENTIFY_OK).replace("2004-03-01T10:00:00Z", "2004-03-01");
    let diags = analyze(day_date.as_bytes(), Verb::Identify).unwrap_err();
    assert_eq!(codes_of(&diags), vec![codes::BAD_DATESTAMP]);

    let wrong_verb = identify_body(IDENTIFY_OK);
    let diags = analyze(wrong_verb.as_bytes(), Verb::ListSets).unwrap_err();
    assert_eq!(codes_of(&diags), vec![codes::WRONG_VERB_PAYLOAD]);
}

#[test]
fn error_list_payload() {
    let body = format!(
        r#"{HEAD}
  <request>http://example.org/oai</request>
  <error code="badVerb">Illegal verb</error>
  <error code="badRequest">made up</error>
</OAI-PMH>"#
    );
    let env = analyze(body.as_bytes(), Verb::Identify).unwrap();
    assert_eq!(env.errors().len(), 2);
    assert!(env.has_error_code(OaiErrorCode::BadVerb));
    assert_eq!(env.unknown_error_codes(), vec!["badRequest"]);
    assert!(env.request_echo.attributes.is_empty());
    let diags = extract_identify(&env).unwrap_err();
    assert_eq!(codes_of(&diags), vec![codes::ERROR_RESPONSE]);
}

fn list_identifiers(inner: &str) -> String {
    format!(
        r#"{HEAD}
  <request verb="ListIdentifiers" metadataPrefix="oai_dc">http://example.org/oai</request>
  <ListIdentifiers>{inner}</ListIdentifiers>
</OAI-PMH>"#
    )
}

fn header(id: &str, ds: Option<&str>) -> String {
    match ds {
        Some(ds) => {
            format!("<header><identifier>{id}</identifier><datestamp>{ds}</datestamp></header>")
        }
        None => format!("<header><identifier>{id}</identifier></header>"),
    }
}

#[test]
fn headers_in_document_order() {
    let inner = [
        header("oai:x:3", Some("2002-06-01")),
        header("oai:x:1", Some("2002-06-02")),
        header("oai:x:2", Some("2002-06-03")),
    ]
    .concat();
    let env = analyze(list_identifiers(&inner).as_bytes(), Verb::ListIdentifiers).unwrap();
    let list = extract_headers(&env).unwrap();
    let ids: Vec<&str> = list.headers.iter().map(|h| h.identifier.as_str()).collect();
    assert_eq!(ids, ["oai:x:3", "oai:x:1", "oai:x:2"]);
    assert!(list.token.is_none());
}

#[test]
fn header_without_datestamp() {
    let inner = [
        header("oai:x:1", None),
        header("oai:x:2", Some("2002-06-03")),
    ]
    .concat();
    let env = analyze(list_identifiers(&inner).as_bytes(), Verb::ListIdentifiers).unwrap();
    let list = extract_headers(&env).unwrap();
    assert_eq!(list.headers[0].datestamp, None);
    assert!(list.headers[1].datestamp.is_some());
}

#[test]
fn empty_and_nonempty_tokens() {
    let inner = format!(
        "{}<resumptionToken></resumptionToken>",
        header("oai:x:1", Some("2002-06-01"))
    );
    let env = analyze(list_identifiers(&inner).as_bytes(), Verb::ListIdentifiers).unwrap();
    let token = extract_headers(&env).unwrap().token.unwrap();
    assert!(token.is_empty());

    let inner = format!(
        "{}<resumptionToken completeListSize=\"5\" cursor=\"0\">abc</resumptionToken>",
        header("oai:x:1", Some("2002-06-01"))
    );
    let env = analyze(list_identifiers(&inner).as_bytes(), Verb::ListIdentifiers).unwrap();
    let token = extract_headers(&env).unwrap().token.unwrap();
    assert_eq!(token.token, "abc");
    assert_eq!(token.complete_list_size, Some(5));
    assert_eq!(token.cursor, Some(0));

    let inner = format!(
        "{}<resumptionToken cursor=\"-1\">abc</resumptionToken>",
        header("oai:x:1", Some("2002-06-01"))
    );
    let env = analyze(list_identifiers(&inner).as_bytes(), Verb::ListIdentifiers).unwrap();
    assert_eq!(
        codes_of(&extract_headers(&env).unwrap_err()),
        vec![codes::BAD_VALUE]
    );
}

#[test]
fn error_list_yields_empty_headers() {
    let body = format!(
        r#"{HEAD}
  <request verb="ListIdentifiers" metadataPrefix="oai_dc">http://example.org/oai</request>
  <error code="noRecordsMatch"/>
</OAI-PMH>"#
    );
    let env = analyze(body.as_bytes(), Verb::ListIdentifiers).unwrap();
    let list = extract_headers(&env).unwrap();
    assert!(list.headers.is_empty());
    assert_eq!(list.errors[0].code, Some(OaiErrorCode::NoRecordsMatch));
}

#[test]
fn get_record_with_oai_dc() {
    let body = format!(
        r#"{HEAD}
  <request verb="GetRecord" identifier="oai:x:1" metadataPrefix="oai_dc">http://example.org/oai</request>
  <GetRecord><record>
    <header><identifier>oai:x:1</identifier><datestamp>2002-06-01</datestamp></header>
    <metadata><oai_dc:dc xmlns:oai_dc="http://www.openarchives.org/OAI/2.0/oai_dc/" xmlns:dc="http://purl.org/dc/elements/1.1/"><dc:title>T</dc:title></oai_dc:dc></metadata>
  </record></GetRecord>
</OAI-PMH>"#
    );
    let env = analyze(body.as_bytes(), Verb::GetRecord).unwrap();
    let rec = extract_record(&env).unwrap();
    assert_eq!(rec.header.identifier, "oai:x:1");
    assert!(rec.oai_dc && rec.has_metadata);
}

#[test]
fn metadata_formats_and_sets() {
    let body = format!(
        r#"{HEAD}
  <request verb="ListMetadataFormats">http://example.org/oai</request>
  <ListMetadataFormats><metadataFormat>
    <metadataPrefix>oai_dc</metadataPrefix>
    <schema>http://www.openarchives.org/OAI/2.0/oai_dc.xsd</schema>
    <metadataNamespace>http://www.openarchives.org/OAI/2.0/oai_dc/</metadataNamespace>
  </metadataFormat></ListMetadataFormats>
</OAI-PMH>"#
    );
    let env = analyze(body.as_bytes(), Verb::ListMetadataFormats).unwrap();
    assert_eq!(extract_metadata_formats(&env).unwrap()[0].prefix, "oai_dc");

    let body = format!(
        r#"{HEAD}
  <request verb="ListSets">http://example.org/oai</request>
  <ListSets><set><setName>A</setName><setSpec>a</setSpec></set></ListSets>
</OAI-PMH>"#
    );
    let env = analyze(body.as_bytes(), Verb::ListSets).unwrap();
    assert_eq!(
        codes_of(&check_list_sets(&env)),
        vec![codes::ELEMENT_OUT_OF_ORDER]
    );
}

#[test]
fn content_type_conflict_surfaces_as_warning() {
    let body = identify_body(IDENTIFY_OK);
    let env = analyze_http(
        body.as_bytes(),
        Some("text/xml; charset=iso-8859-1"),
        Verb::Identify,
    )
    .unwrap();
    assert_eq!(env.warnings.len(), 1);
    assert_eq!(env.warnings[0].severity, Severity::Warning);
    assert_eq!(env.warnings[0].code, codes::ENCODING_MISMATCH);
}

mod totality {
    use super::*;
    use proptest::prelude::*;

    fn check(bytes: &[u8]) -> Result<(), TestCaseError> {
        for verb in [Verb::Identify, Verb::ListIdentifiers] {
            match analyze(bytes, verb) {
                Ok(env) => {
                    let _ = extract_identify(&env);
                    let _ = extract_headers(&env);
                }
                Err(diags) => prop_assert!(!diags.is_empty()),
            }
        }
        Ok(())
    }

    proptest! {
        #[test]
        fn arbitrary_bytes(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            check(&bytes)?;
        }

        #[test]
        fn mutated_identify(pos in 0usize..600, byte in any::<u8>(), cut in 0usize..700) {
            let mut body = identify_body(IDENTIFY_OK).into_bytes();
            let p = pos % body.len();
            body[p] = byte;
            body.truncate(cut.max(1));
            check(&body)?;
        }
    }
}

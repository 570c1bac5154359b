use super::*;
use crate::analysis::{analyze, codes, extract_headers, extract_identify, extract_record};
use crate::model::validate_admin_email;
use crate::simulator::Fault;
use proptest::prelude::*;

const BASE: &str = "http://sim.example.org/oai";

fn now() -> UtcDatestamp {
    parse_datestamp("2024-01-02T03:04:05Z").unwrap()
}

fn ask(profile: &FaultProfile, query: &str) -> SimResponse {
    match handle(
        &SimRequest::from_query(BASE, query),
        profile,
        &RepoContent::default(),
        now(),
    ) {
        Reply::Respond(r) => r,
        Reply::Stall => panic!("stalled"),
    }
}

fn clean(query: &str) -> SimResponse {
    ask(&FaultProfile::clean(), query)
}

fn error_codes(r: &SimResponse, verb: Verb) -> Vec<OaiErrorCode> {
    let env = analyze(&r.body, verb).unwrap_or_else(|d| panic!("{d:?}\n{}", r.body_text()));
    env.errors().iter().map(|e| e.code.unwrap()).collect()
}

#[test]
fn clean_identify_extracts() {
    let r = clean("verb=Identify");
    assert_eq!(r.status, 200);
    let env = analyze(&r.body, Verb::Identify).unwrap();
    let info = extract_identify(&env).unwrap();
    assert_eq!(info.base_url.as_str(), BASE);
    assert_eq!(info.protocol_version, "2.0");
    assert_eq!(info.granularity, Granularity::Second);
    assert_eq!(info.earliest_datestamp.render(), "2002-06-01T00:00:00Z");
    assert!(info.admin_emails.iter().all(|e| validate_admin_email(e)));
    assert_eq!(env.response_date, now());
}

#[test]
fn list_identifiers_pages_with_tokens() {
    let r = clean("verb=ListIdentifiers&metadataPrefix=oai_dc");
    let list = extract_headers(&analyze(&r.body, Verb::ListIdentifiers).unwrap()).unwrap();
    assert_eq!(list.headers.len(), 3);
    let token = list.token.unwrap();
    assert!(!token.is_empty());
    assert_eq!(token.complete_list_size, Some(5));
    let q = format!(
        "verb=ListIdentifiers&resumptionToken={}",
        crate::transport::encode_component(&token.token)
    );
    let list = extract_headers(&analyze(&clean(&q).body, Verb::ListIdentifiers).unwrap()).unwrap();
    assert_eq!(list.headers.len(), 2);
    assert!(list.headers[1].deleted);
    let last = list.token.unwrap();
    assert!(last.is_empty());
    assert_eq!(last.cursor, Some(3));
}

#[test]
fn single_page_has_no_token_unless_faulted() {
    let q = "verb=ListIdentifiers&metadataPrefix=oai_dc&from=2002-06-02T00:00:00Z";
    let list = extract_headers(&analyze(&clean(q).body, Verb::ListIdentifiers).unwrap()).unwrap();
    assert_eq!(list.headers.len(), 2);
    assert_eq!(list.token, None);
    let faulted = ask(
        &FaultProfile::clean().with(Fault::SpuriousEmptyResumptionToken),
        q,
    );
    let list = extract_headers(&analyze(&faulted.body, Verb::ListIdentifiers).unwrap()).unwrap();
    assert!(list.token.unwrap().is_empty());
}

#[test]
fn window_boundaries_are_inclusive() {
    let q = "verb=ListIdentifiers&metadataPrefix=oai_dc&from=2002-06-01T12:30:00Z&until=2002-06-01T12:30:00Z";
    let list = extract_headers(&analyze(&clean(q).body, Verb::ListIdentifiers).unwrap()).unwrap();
    assert_eq!(list.headers.len(), 1);
    assert_eq!(list.headers[0].identifier, "oai:sim.example.org:2");
    let q = "verb=ListIdentifiers&metadataPrefix=oai_dc&from=2002-06-02&until=2002-06-02";
    let list = extract_headers(&analyze(&clean(q).body, Verb::ListIdentifiers).unwrap()).unwrap();
    assert_eq!(list.headers.len(), 2);
}

#[test]
fn argument_errors() {
    let cases: &[(&str, Verb, OaiErrorCode)] = &[
        ("verb=NoSuchVerb", Verb::Identify, OaiErrorCode::BadVerb),
        ("", Verb::Identify, OaiErrorCode::BadVerb),
        ("verb=GetRecord", Verb::GetRecord, OaiErrorCode::BadArgument),
        (
            "verb=GetRecord&identifier=invalid%22id&metadataPrefix=oai_dc",
            Verb::GetRecord,
            OaiErrorCode::BadArgument,
        ),
        (
            "verb=GetRecord&identifier=oai:nowhere:9&metadataPrefix=oai_dc",
            Verb::GetRecord,
            OaiErrorCode::IdDoesNotExist,
        ),
        (
            "verb=GetRecord&identifier=oai:sim.example.org:1&metadataPrefix=nonexistent",
            Verb::GetRecord,
            OaiErrorCode::CannotDisseminateFormat,
        ),
        (
            "verb=ListRecords&metadataPrefix=nonexistent",
            Verb::ListRecords,
            OaiErrorCode::CannotDisseminateFormat,
        ),
        (
            "verb=ListIdentifiers&resumptionToken=junk",
            Verb::ListIdentifiers,
            OaiErrorCode::BadResumptionToken,
        ),
        (
            "verb=ListIdentifiers&resumptionToken=junk&metadataPrefix=oai_dc",
            Verb::ListIdentifiers,
            OaiErrorCode::BadArgument,
        ),
        (
            "verb=ListIdentifiers&metadataPrefix=oai_dc&from=2002-13-01",
            Verb::ListIdentifiers,
            OaiErrorCode::BadArgument,
        ),
        (
            "verb=ListIdentifiers&metadataPrefix=oai_dc&from=2002-06-02&until=2002-06-01",
            Verb::ListIdentifiers,
            OaiErrorCode::BadArgument,
        ),
        (
            "verb=ListIdentifiers&metadataPrefix=oai_dc&from=2003-01-01",
            Verb::ListIdentifiers,
            OaiErrorCode::NoRecordsMatch,
        ),
        (
            "verb=ListIdentifiers&metadataPrefix=oai_dc&set=x",
            Verb::ListIdentifiers,
            OaiErrorCode::NoSetHierarchy,
        ),
        (
            "verb=ListSets",
            Verb::ListSets,
            OaiErrorCode::NoSetHierarchy,
        ),
        (
            "verb=Identify&extra=1",
            Verb::Identify,
            OaiErrorCode::BadArgument,
        ),
        (
            "verb=Identify&verb=Identify",
            Verb::Identify,
            OaiErrorCode::BadVerb,
        ),
    ];
    for (q, verb, code) in cases {
        assert_eq!(error_codes(&clean(q), *verb), vec![*code], "{q}");
    }
}

#[test]
fn bad_argument_echo_has_no_attributes() {
    let r = clean("verb=GetRecord&identifier=invalid%22id&metadataPrefix=oai_dc");
    let env = analyze(&r.body, Verb::GetRecord).unwrap();
    assert!(env.request_echo.attributes.is_empty());
    assert_eq!(env.request_echo.text, BASE);
}

#[test]
fn get_record_has_oai_dc() {
    let r = clean("verb=GetRecord&identifier=oai:sim.example.org:4&metadataPrefix=oai_dc");
    let rec = extract_record(&analyze(&r.body, Verb::GetRecord).unwrap()).unwrap();
    assert!(rec.has_metadata && rec.oai_dc);
    assert!(r.body_text().contains("A &quot;quoted&quot; &lt;title&gt;"));
}

#[test]
fn identify_faults() {
    let r = ask(
        &FaultProfile::clean().with(Fault::MalformedIdentifyXml),
        "verb=Identify",
    );
    let d = analyze(&r.body, Verb::Identify).unwrap_err();
    assert!(d.iter().any(|d| d.code == codes::MISMATCHED_TAG), "{d:?}");

    let p = FaultProfile::clean().with(Fault::ProtocolVersionOverride("1.1".into()));
    let info = extract_identify(&analyze(&ask(&p, "verb=Identify").body, Verb::Identify).unwrap())
        .unwrap();
    assert_eq!(info.protocol_version, "1.1");

    let p = FaultProfile::clean().with(Fault::BadAdminEmail);
    let info = extract_identify(&analyze(&ask(&p, "verb=Identify").body, Verb::Identify).unwrap())
        .unwrap();
    assert!(!validate_admin_email(&info.admin_emails[0]));

    let p = FaultProfile::clean().with(Fault::MissingIdentifyElement("granularity".into()));
    let env = analyze(&ask(&p, "verb=Identify").body, Verb::Identify).unwrap();
    assert!(extract_identify(&env)
        .unwrap_err()
        .iter()
        .any(|d| d.code == codes::MISSING_ELEMENT));

    let p = FaultProfile::clean().with(Fault::GranularityMismatch);
    let text = ask(&p, "verb=Identify").body_text();
    assert!(text.contains("<earliestDatestamp>2002-06-01</earliestDatestamp>"));
}

#[test]
fn transport_level_faults() {
    let r = ask(
        &FaultProfile::clean().with(Fault::Http500HtmlBody),
        "verb=Identify",
    );
    assert_eq!(r.status, 500);
    assert!(analyze(&r.body, Verb::Identify)
        .unwrap_err()
        .iter()
        .any(|d| d.code == codes::NOT_XML));

    let r = ask(
        &FaultProfile::clean().with(Fault::Infinite503(7)),
        "verb=Identify",
    );
    assert_eq!(r.status, 503);
    assert!(r
        .headers
        .contains(&("Retry-After".to_string(), "7".to_string())));

    let p = FaultProfile::clean().with(Fault::NoResponse);
    assert_eq!(
        handle(
            &SimRequest::from_query(BASE, "verb=Identify"),
            &p,
            &RepoContent::default(),
            now()
        ),
        Reply::Stall
    );

    let r = ask(
        &FaultProfile::clean().with(Fault::StylesheetPiInvalidBody),
        "verb=Identify",
    );
    let d = analyze(&r.body, Verb::Identify).unwrap_err();
    assert!(d.iter().any(|d| d.code == codes::STYLESHEET_PI), "{d:?}");
}

#[test]
fn content_faults() {
    let p = FaultProfile::clean().with(Fault::EmptyRepository);
    assert_eq!(
        error_codes(
            &ask(&p, "verb=ListIdentifiers&metadataPrefix=oai_dc"),
            Verb::ListIdentifiers
        ),
        vec![OaiErrorCode::NoRecordsMatch]
    );

    let p = FaultProfile::clean().with(Fault::StripDatestamps);
    let list = extract_headers(
        &analyze(
            &ask(&p, "verb=ListIdentifiers&metadataPrefix=oai_dc").body,
            Verb::ListIdentifiers,
        )
        .unwrap(),
    )
    .unwrap();
    assert!(list.headers.iter().all(|h| h.datestamp.is_none()));

    let p = FaultProfile::clean().with(Fault::EmptyWindow);
    assert!(extract_headers(
        &analyze(
            &ask(&p, "verb=ListIdentifiers&metadataPrefix=oai_dc").body,
            Verb::ListIdentifiers
        )
        .unwrap()
    )
    .unwrap()
    .errors
    .is_empty());
    assert_eq!(
        error_codes(
            &ask(
                &p,
                "verb=ListIdentifiers&metadataPrefix=oai_dc&from=2002-06-01"
            ),
            Verb::ListIdentifiers
        ),
        vec![OaiErrorCode::NoRecordsMatch]
    );
}

#[test]
fn exception_faults() {
    let p = FaultProfile::clean().with(Fault::UnescapedInvalidIdEcho);
    let r = ask(
        &p,
        "verb=GetRecord&identifier=invalid%22id&metadataPrefix=oai_dc",
    );
    assert!(analyze(&r.body, Verb::GetRecord).is_err());

    let p = FaultProfile::clean().with(Fault::IgnoreBadArgs);
    let env = analyze(&ask(&p, "verb=NoSuchVerb").body, Verb::Identify).unwrap();
    assert!(env.verb_payload().is_some());
    let env = analyze(&ask(&p, "verb=GetRecord").body, Verb::GetRecord).unwrap();
    assert!(env.verb_payload().is_some());
    let env = analyze(
        &ask(&p, "verb=ListIdentifiers&resumptionToken=junk").body,
        Verb::ListIdentifiers,
    )
    .unwrap();
    assert!(env.verb_payload().is_some());

    let p = FaultProfile::clean().with(Fault::UnknownErrorCode);
    let env = analyze(&ask(&p, "verb=ListSets").body, Verb::ListSets).unwrap();
    assert_eq!(env.unknown_error_codes(), vec![BOGUS_ERROR_CODE]);
}

proptest! {
    #[test]
    fn any_query_yields_parseable_response(pairs in proptest::collection::vec(("[a-zA-Z]{0,16}", "[ -~]{0,24}"), 0..5)) {
        let args: Vec<(String, String)> = pairs;
        let req = SimRequest { base_url: BASE.to_string(), args };
        let Reply::Respond(r) = handle(&req, &FaultProfile::clean(), &RepoContent::default(), now()) else { unreachable!() };
        prop_assert_eq!(r.status, 200);
        let verb = req.get("verb").and_then(|v| v.parse().ok()).unwrap_or(Verb::Identify);
        let env = analyze(&r.body, verb);
        prop_assert!(env.is_ok(), "{:?}\n{}", env, r.body_text());
    }

    #[test]
    fn token_round_trips(cursor in 0usize..1000, from in proptest::option::of(0i64..2_000_000_000)) {
        let c = ListCursor {
            prefix: "oai_dc".into(),
            from: from.map(|s| UtcDatestamp::second(chrono::DateTime::from_timestamp(s, 0).unwrap())),
            until: None,
            cursor,
        };
        prop_assert_eq!(decode_token(&encode_token(&c, "abcd1234"), "abcd1234"), Some(c.clone()));
        prop_assert_eq!(decode_token(&encode_token(&c, "abcd1234"), "ffff0000"), None);
    }
}

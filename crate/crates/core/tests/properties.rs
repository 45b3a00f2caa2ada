use std::path::Path;

use hdl_explain::backend::mock::{BUG1_COPY_PASTE_FIX, BUG1_GOOD};
use hdl_explain::grading::auto_flag_solution;
use hdl_explain::{scan_errors, Tool};
use proptest::prelude::*;

fn noise_line() -> impl Strategy<Value = String> {
    prop_oneof![
        "INFO: \\[Synth 8-[0-9]{3,4}\\] [a-z ]{0,20}",
        "WARNING: \\[Synth 8-[0-9]{3,4}\\] [a-z ]{0,20}",
        "Info \\([0-9]{5}\\): [a-z ]{0,20}",
        "Warning \\([0-9]{5}\\): [a-z ]{0,20}",
        "    Error: [a-z ]{0,20}",
        "[a-z ]{0,30}",
    ]
}

fn vivado_error() -> impl Strategy<Value = String> {
    ("[0-9]{3,4}", "[a-z ]{1,20}", "[a-z]{1,8}", 1u32..500).prop_map(|(code, msg, file, line)| {
        format!("ERROR: [Synth 8-{code}] {msg} [rtl/{file}.vhd:{line}]")
    })
}

fn quartus_error() -> impl Strategy<Value = String> {
    prop_oneof![
        ("[0-9]{5}", "[a-z ]{1,20}", "[a-z]{1,8}", 1u32..500)
            .prop_map(|(c, m, f, l)| format!("Error ({c}): {m} at {f}.v({l})")),
        "[a-z ]{1,20}".prop_map(|m| format!("Error: {m}")),
    ]
}

proptest! {
    #[test]
    fn vivado_scan_counts_exactly_the_error_lines(
        lines in prop::collection::vec(prop_oneof![noise_line().prop_map(|l| (false, l)), vivado_error().prop_map(|l| (true, l))], 0..40)
    ) {
        let text: String = lines.iter().map(|(_, l)| format!("{l}\n")).collect();
        let records = scan_errors(&text, Tool::Vivado, Path::new("runme.log"));
        let expected: Vec<&String> = lines.iter().filter(|(e, _)| *e).map(|(_, l)| l).collect();
        prop_assert_eq!(records.len(), expected.len());
        for (i, (r, raw)) in records.iter().zip(expected).enumerate() {
            prop_assert_eq!(&r.raw_line, raw);
            prop_assert_eq!(r.index, i);
            prop_assert!(r.line_no.is_some());
        }
    }

    #[test]
    fn quartus_scan_counts_exactly_the_error_lines(
        lines in prop::collection::vec(prop_oneof![noise_line().prop_map(|l| (false, l)), quartus_error().prop_map(|l| (true, l))], 0..40)
    ) {
        let text: String = lines.iter().map(|(_, l)| format!("{l}\r\n")).collect();
        let records = scan_errors(&text, Tool::Quartus, Path::new("top.map.rpt"));
        let expected = lines.iter().filter(|(e, _)| *e).count();
        prop_assert_eq!(records.len(), expected);
    }

    #[test]
    fn solution_flag_survives_appended_text(tail in "[ -~\\n]{0,200}") {
        let text = format!("{BUG1_COPY_PASTE_FIX}\n{tail}");
        prop_assert!(auto_flag_solution(&text));
    }

    #[test]
    fn solution_block_anywhere_after_prose_is_flagged(prefix in "[a-zA-Z .,\\n]{0,200}") {
        let text = format!("{prefix}\n```\nassign y = a & b;\n```\n");
        prop_assert!(auto_flag_solution(&text));
        prop_assert!(!auto_flag_solution(&prefix));
    }
}

#[test]
fn good_explanation_plus_fix_is_flagged() {
    assert!(!auto_flag_solution(BUG1_GOOD));
    assert!(auto_flag_solution(&format!(
        "{BUG1_GOOD}\n```\ndata_out <= (others => '0');\n```"
    )));
}

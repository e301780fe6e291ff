//! Every example must run to completion.

macro_rules! example {
    ($name:ident, $file:literal) => {
        mod $name {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }

        #[test]
        fn $name() {
            $name::run().unwrap();
        }
    };
}

example!(synth_corpus, "synth_corpus.rs");
example!(render_prompts, "render_prompts.rs");
example!(extract_encounter, "extract_encounter.rs");
example!(verify_quotes, "verify_quotes.rs");
example!(cohort_run, "cohort_run.rs");
example!(gateway_retries, "gateway_retries.rs");
example!(agreement, "agreement.rs");
example!(calibration, "calibration.rs");
example!(theme_atlas, "theme_atlas.rs");
example!(spec_ledger, "spec_ledger.rs");
example!(annotation_service, "annotation_service.rs");

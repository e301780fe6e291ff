// Note selection and template rendering for each stage.
//
// ```bash
// cargo run --example render_prompts
// ```

use std::error::Error;

use qi_workbench::domain::Metric;
use qi_workbench::prompt::{assemble_note_context, render, select_notes, InputSpec, RenderContext, Stage, TemplateLibrary};
use qi_workbench::synth::{synthesize, SynthConfig};

pub fn run() -> Result<(), Box<dyn Error>> {
    let s = synthesize(&SynthConfig::new(Metric::Los, 1, 7))?;
    let bundle = &s.corpus.bundles[0];
    let spec = InputSpec::final_for(Metric::Los);
    let selected = select_notes(bundle, &spec);
    println!("{} of {} notes selected", selected.len(), bundle.notes.len());

    let notes = assemble_note_context(bundle, &spec)?;
    let lib = TemplateLibrary::builtin();
    for t in lib.iter() {
        println!("{:<24} {} bytes", t.file_name(), t.body.len());
    }

    let gantt = lib.latest(Metric::Los, Stage::Gantt)?;
    let prompt = render(
        gantt,
        &RenderContext {
            notes_text: &notes,
            ..RenderContext::default()
        },
    )?;
    assert!(prompt.contains(&notes));

    // the factor stage also needs the timeline
    let factors = lib.latest(Metric::Los, Stage::Factors)?;
    let err = render(
        factors,
        &RenderContext {
            notes_text: &notes,
            ..RenderContext::default()
        },
    )
    .unwrap_err();
    println!("factors without gantt: {err}");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().unwrap();
}

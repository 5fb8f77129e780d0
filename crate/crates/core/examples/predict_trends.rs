// Stage-1 trend prediction over the demo corpus with a scripted model.
//
// cargo run --example predict_trends

use std::collections::BTreeMap;
use std::path::PathBuf;

use stockchain::corpus::{Corpus, TemplateSet};
use stockchain::gateway::ScriptedBackend;
use stockchain::prediction::{accuracy, chosen_by_month, predict_corpus, DirectionLexicon};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let demo = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo");
    let corpus = Corpus::load(&demo.join("corpus.jsonl"))?;
    let model = ScriptedBackend::load(&demo.join("model.json"))?;
    let preds = predict_corpus(&corpus, &model, &TemplateSet::builtin(), &DirectionLexicon::default(), None)?;

    for p in &preds {
        println!("{} {} {:?} {:?}", p.month, p.company_id, p.direction, p.prob_category);
    }
    for (month, set) in chosen_by_month(&preds)? {
        println!("{month} chosen: {:?}", set.company_ids);
    }
    let mut labels = BTreeMap::new();
    for p in &preds {
        labels.insert((p.company_id.clone(), p.month), corpus.market().label(&p.company_id, p.month)?);
    }
    println!("accuracy {:.4}", accuracy(&preds, &labels)?);
    Ok(())
}

//! Deterministic synthetic inputs for the benchmarks.

use nerkit_core::recognizers::Gazetteer;

const SUBJECTS: [&str; 6] = [
    "Acme Corp",
    "the U.N. delegation",
    "Dr. Ekeus",
    "the finance committee",
    "Canberra officials",
    "the supplier",
];

const ACTIONS: [&str; 5] = [
    "approved a payment of $1,250.50",
    "met on 2021-03-12 at 9:30 AM",
    "shipped 14 kg of parts to New York",
    "raised the forecast by 12.5%",
    "signed the third contract",
];

/// Builds `sentences` deterministic sentences mixing names, money, dates,
/// and quantities, joined into one document.
pub fn synthetic_text(sentences: usize) -> String {
    let mut out = String::new();
    for i in 0..sentences {
        let subject = SUBJECTS[i % SUBJECTS.len()];
        let action = ACTIONS[(i / SUBJECTS.len() + i) % ACTIONS.len()];
        out.push_str(subject);
        out.push(' ');
        out.push_str(action);
        out.push_str(". ");
    }
    out
}

/// A gazetteer with `entries` generated place names plus the phrases that
/// actually occur in [`synthetic_text`].
pub fn synthetic_gazetteer(entries: usize) -> Gazetteer {
    let mut content = String::from(
        "Acme Corp\tORG\nU.N.\tORG\nEkeus\tPERSON\nCanberra\tGPE\nNew York\tGPE\n",
    );
    for i in 0..entries {
        content.push_str(&format!("Placeville {i}\tGPE\n"));
    }
    Gazetteer::parse("synthetic", &content, false).expect("generated gazetteer parses")
}

//! Canonical text serialization of a KB. `parse_kb(save_kb(kb))` reproduces
//! the KB exactly, and saving the reparse reproduces the text.

use std::fmt::Write as _;

use super::{FragmentType, MebnKb};

pub fn save_kb(kb: &MebnKb) -> String {
    let mut out = String::new();
    for e in &kb.entity_types {
        let default_prefix = e
            .label
            .chars()
            .next()
            .map(|c| c.to_ascii_lowercase().to_string())
            .unwrap_or_default();
        if e.prefix == default_prefix {
            let _ = writeln!(out, "entity {} ;", e.label);
        } else {
            let _ = writeln!(out, "entity {} = {} ;", e.label, e.prefix);
        }
    }
    for h in &kb.hypothesis_types {
        let attrs: Vec<String> = h.attrs.iter().map(|(a, e)| format!("{a}:{e}")).collect();
        let _ = writeln!(
            out,
            "hyptype {} ( {} ) values [ {} ] ;",
            h.label,
            attrs.join(", "),
            h.values.join(", ")
        );
    }
    for f in &kb.fragment_types {
        write_fragment(&mut out, kb, f);
    }
    out
}

fn write_fragment(out: &mut String, kb: &MebnKb, f: &FragmentType) {
    let attrs: Vec<String> = f.attrs.iter().map(|(a, e)| format!("{a}:{e}")).collect();
    let _ = writeln!(out, "fragment {} ( {} ) {{", f.id, attrs.join(", "));
    for i in &f.inputs {
        let _ = writeln!(out, "  input {}({}) ;", i.hyp_type, i.attrs.join(","));
    }
    for r in &f.residents {
        let _ = writeln!(out, "  resident {}({}) ;", r.hyp_type, r.attrs.join(","));
    }
    for (p, c) in &f.edges {
        let pa = f.node_ref(p).map(|r| r.attrs.join(",")).unwrap_or_default();
        let ca = f.node_ref(c).map(|r| r.attrs.join(",")).unwrap_or_default();
        let _ = writeln!(out, "  edge {p}({pa}) -> {c}({ca}) ;");
    }
    for (hyp, cpt) in &f.cpts {
        let cards: Vec<usize> = cpt
            .parent_order
            .iter()
            .map(|p| kb.hyp_type(p).map(|h| h.values.len()).unwrap_or(1))
            .collect();
        for (i, row) in cpt.rows.iter().enumerate() {
            let probs: Vec<String> = row.iter().map(|v| format_prob(*v)).collect();
            if cpt.parent_order.is_empty() {
                let _ = writeln!(out, "  cpt {hyp} : [ {} ] ;", probs.join(", "));
            } else {
                let mut idx = i;
                let mut conds = vec![String::new(); cards.len()];
                for d in (0..cards.len()).rev() {
                    let k = idx % cards[d];
                    idx /= cards[d];
                    let parent = &cpt.parent_order[d];
                    let state = &kb.hyp_type(parent).unwrap().values[k];
                    conds[d] = format!("{parent}={state}");
                }
                let _ = writeln!(
                    out,
                    "  cpt {hyp} | {} : [ {} ] ;",
                    conds.join(", "),
                    probs.join(", ")
                );
            }
        }
    }
    for (entity, v) in &f.star_priors {
        let _ = writeln!(out, "  star_prior {entity} = {} ;", format_prob(*v));
    }
    let _ = writeln!(out, "}}");
}

fn format_prob(v: f64) -> String {
    // shortest round-trip representation; stable across runs
    let s = format!("{v}");
    if s.contains('.') || s.contains('e') {
        s
    } else {
        format!("{s}.0")
    }
}

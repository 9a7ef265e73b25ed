//! Genotype and sampled-agent persistence: a single JSON document per
//! checkpoint with every float emitted at 17 significant digits so that
//! float64 values survive a save/load round trip bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::model::{ConstraintMode, Genotype, ModelDims, build_polarity_matrix};
use crate::sampler::SampledAgent;

pub const FORMAT_VERSION: u32 = 1;

/// 17 significant digits: enough for a lossless float64 round trip.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn push_f64_matrix(out: &mut String, indent: &str, m: &Mat<f64>) {
    out.push('[');
    for r in 0..m.rows() {
        if r > 0 {
            out.push(',');
        }
        out.push('\n');
        out.push_str(indent);
        out.push_str("  [");
        for c in 0..m.cols() {
            if c > 0 {
                out.push_str(", ");
            }
            out.push_str(&fmt_f64(m[(r, c)]));
        }
        out.push(']');
    }
    out.push('\n');
    out.push_str(indent);
    out.push(']');
}

fn push_int_matrix<T: std::fmt::Display + Copy>(out: &mut String, indent: &str, m: &Mat<T>) {
    out.push('[');
    for r in 0..m.rows() {
        if r > 0 {
            out.push(',');
        }
        out.push('\n');
        out.push_str(indent);
        out.push_str("  [");
        for c in 0..m.cols() {
            if c > 0 {
                out.push_str(", ");
            }
            let _ = write!(out, "{}", m[(r, c)]);
        }
        out.push(']');
    }
    out.push('\n');
    out.push_str(indent);
    out.push(']');
}

fn push_f64_matrix_list(out: &mut String, key: &str, ms: &[Mat<f64>]) {
    let _ = write!(out, "    \"{key}\": [");
    for (i, m) in ms.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str("\n      ");
        push_f64_matrix(out, "      ", m);
    }
    out.push_str("\n    ]");
}

/// Serialize a genotype to the canonical checkpoint JSON text.
pub fn genotype_to_json(genotype: &Genotype<f64>) -> Result<String> {
    genotype.validate()?;
    let mut out = String::new();
    out.push_str("{\n");
    let _ = write!(out, "  \"format_version\": {FORMAT_VERSION},\n");
    let d = &genotype.dims;
    let sizes: Vec<String> = d.layer_sizes.iter().map(|n| n.to_string()).collect();
    let _ = write!(
        out,
        "  \"dims\": {{\"layer_sizes\": [{}], \"genes\": {}, \"neurotransmitters\": {}, \"receptors\": {}}},\n",
        sizes.join(", "),
        d.genes,
        d.neurotransmitters,
        d.receptors
    );
    let _ = write!(out, "  \"constraint_mode\": \"{}\",\n", genotype.constraint_mode());
    let _ = write!(out, "  \"temperature\": {},\n", fmt_f64(genotype.temperature));
    let _ = write!(out, "  \"seed\": {},\n", genotype.seed);
    out.push_str("  \"matrices\": {\n");
    push_f64_matrix_list(&mut out, "X_hat", &genotype.x_hat);
    out.push_str(",\n    \"O_hat\": ");
    push_f64_matrix(&mut out, "    ", &genotype.o_hat);
    out.push_str(",\n");
    push_f64_matrix_list(&mut out, "Q_hat", &genotype.q_hat);
    out.push_str(",\n");
    push_f64_matrix_list(&mut out, "R_hat", &genotype.r_hat);
    out.push_str(",\n    \"K_hat\": ");
    push_f64_matrix(&mut out, "    ", &genotype.k_hat);
    out.push_str("\n  }");
    if let Some(mask) = &genotype.coexpression_mask {
        out.push_str(",\n  \"coexpression_mask\": ");
        push_int_matrix(&mut out, "  ", mask);
    }
    out.push_str("\n}\n");
    Ok(out)
}

/// Serialize a genotype plus one sampled agent (same container, extra
/// `agent` section with the synapse counts and realized weights).
pub fn agent_to_json(genotype: &Genotype<f64>, agent: &SampledAgent) -> Result<String> {
    let base = genotype_to_json(genotype)?;
    // splice the agent section before the closing brace
    let trimmed = base.trim_end();
    let without_brace = trimmed
        .strip_suffix('}')
        .ok_or_else(|| Error::Parse("malformed genotype document".into()))?
        .trim_end();
    let mut out = String::from(without_brace);
    out.push_str(",\n  \"agent\": {\n");
    let _ = write!(out, "    \"alpha\": {},\n", fmt_f64(agent.alpha));
    let _ = write!(out, "    \"seed\": {},\n", agent.seed);
    out.push_str("    \"B_tilde\": [");
    for (i, m) in agent.b_tilde.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str("\n      ");
        push_int_matrix(&mut out, "      ", m);
    }
    out.push_str("\n    ],\n");
    push_f64_matrix_list(&mut out, "W", &agent.w);
    // W reuses the 4-space list indent; close agent then the document
    out.push_str("\n  }\n}\n");
    Ok(out)
}

#[derive(Deserialize)]
struct DimsDoc {
    layer_sizes: Vec<usize>,
    genes: usize,
    neurotransmitters: usize,
    receptors: usize,
}

#[derive(Deserialize)]
struct MatricesDoc {
    #[serde(rename = "X_hat")]
    x_hat: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "O_hat")]
    o_hat: Vec<Vec<f64>>,
    #[serde(rename = "Q_hat")]
    q_hat: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "R_hat")]
    r_hat: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "K_hat")]
    k_hat: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct AgentDoc {
    alpha: f64,
    seed: u64,
    #[serde(rename = "B_tilde")]
    b_tilde: Vec<Vec<Vec<u64>>>,
    #[serde(rename = "W")]
    w: Vec<Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
struct CheckpointDoc {
    format_version: u32,
    dims: DimsDoc,
    constraint_mode: String,
    temperature: f64,
    seed: u64,
    matrices: MatricesDoc,
    coexpression_mask: Option<Vec<Vec<u8>>>,
    agent: Option<AgentDoc>,
}

fn nested_to_mat<T: Copy>(nested: &[Vec<T>], what: &str) -> Result<Mat<T>> {
    if nested.is_empty() || nested[0].is_empty() {
        return Err(Error::Parse(format!("{what}: empty matrix")));
    }
    let cols = nested[0].len();
    if nested.iter().any(|row| row.len() != cols) {
        return Err(Error::Parse(format!("{what}: ragged rows")));
    }
    Mat::from_nested(nested)
}

fn nested_list<T: Copy>(nested: &[Vec<Vec<T>>], what: &str) -> Result<Vec<Mat<T>>> {
    nested
        .iter()
        .enumerate()
        .map(|(i, m)| nested_to_mat(m, &format!("{what}[{i}]")))
        .collect()
}

fn parse_doc(json: &str) -> Result<CheckpointDoc> {
    let doc: CheckpointDoc =
        serde_json::from_str(json).map_err(|e| Error::Parse(format!("checkpoint JSON: {e}")))?;
    if doc.format_version != FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "unsupported format_version {} (this build reads {FORMAT_VERSION})",
            doc.format_version
        )));
    }
    Ok(doc)
}

fn doc_to_genotype(doc: &CheckpointDoc) -> Result<Genotype<f64>> {
    let dims = ModelDims::new(
        doc.dims.layer_sizes.clone(),
        doc.dims.genes,
        doc.dims.neurotransmitters,
    )?;
    if dims.receptors != doc.dims.receptors {
        return Err(Error::Parse(format!(
            "receptor count {} inconsistent with neurotransmitters {}",
            doc.dims.receptors, doc.dims.neurotransmitters
        )));
    }
    let coexpression_mask = match doc.coexpression_mask.as_ref() {
        Some(m) => Some(nested_to_mat(m, "coexpression_mask")?),
        None => None,
    };
    let expected_mode = if coexpression_mask.is_some() {
        ConstraintMode::CoexpressionConstrained
    } else {
        ConstraintMode::Free
    };
    if doc.constraint_mode != expected_mode.to_string() {
        return Err(Error::Parse(format!(
            "constraint_mode '{}' inconsistent with mask presence (expected '{expected_mode}')",
            doc.constraint_mode
        )));
    }
    let genotype = Genotype {
        polarity: build_polarity_matrix(dims.neurotransmitters)?,
        dims,
        x_hat: nested_list(&doc.matrices.x_hat, "X_hat")?,
        o_hat: nested_to_mat(&doc.matrices.o_hat, "O_hat")?,
        q_hat: nested_list(&doc.matrices.q_hat, "Q_hat")?,
        r_hat: nested_list(&doc.matrices.r_hat, "R_hat")?,
        k_hat: nested_to_mat(&doc.matrices.k_hat, "K_hat")?,
        coexpression_mask,
        temperature: doc.temperature,
        seed: doc.seed,
    };
    genotype.validate()?;
    Ok(genotype)
}

/// Parse a genotype checkpoint from JSON text.
pub fn genotype_from_json(json: &str) -> Result<Genotype<f64>> {
    let doc = parse_doc(json)?;
    doc_to_genotype(&doc)
}

/// Parse a sampled-agent checkpoint: the carrier genotype plus the agent.
pub fn agent_from_json(json: &str) -> Result<(Genotype<f64>, SampledAgent)> {
    let doc = parse_doc(json)?;
    let genotype = doc_to_genotype(&doc)?;
    let agent_doc = doc
        .agent
        .as_ref()
        .ok_or_else(|| Error::Parse("checkpoint has no agent section".into()))?;
    let agent = SampledAgent {
        alpha: agent_doc.alpha,
        seed: agent_doc.seed,
        b_tilde: nested_list(&agent_doc.b_tilde, "B_tilde")?,
        w: nested_list(&agent_doc.w, "W")?,
        provenance: None,
    };
    if agent.b_tilde.len() != genotype.dims.depth() || agent.w.len() != genotype.dims.depth() {
        return Err(Error::Parse(format!(
            "agent has {} count / {} weight layers for a depth-{} genotype",
            agent.b_tilde.len(),
            agent.w.len(),
            genotype.dims.depth()
        )));
    }
    Ok((genotype, agent))
}

pub fn save_genotype(path: &Path, genotype: &Genotype<f64>) -> Result<()> {
    std::fs::write(path, genotype_to_json(genotype)?)?;
    Ok(())
}

pub fn load_genotype(path: &Path) -> Result<Genotype<f64>> {
    let text = std::fs::read_to_string(path)?;
    genotype_from_json(&text)
}

pub fn save_agent(path: &Path, genotype: &Genotype<f64>, agent: &SampledAgent) -> Result<()> {
    std::fs::write(path, agent_to_json(genotype, agent)?)?;
    Ok(())
}

pub fn load_agent(path: &Path) -> Result<(Genotype<f64>, SampledAgent)> {
    let text = std::fs::read_to_string(path)?;
    agent_from_json(&text)
}

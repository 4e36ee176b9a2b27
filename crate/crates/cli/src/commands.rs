use std::fs;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use nsbox_core::boxes::{mix, InvalidBox, Mixture, NsBox, VertexId};
use nsbox_core::decomposition::{
    decompose_pr_fraction, find_dim2_model, DecompositionError, Dim2SearchConfig, SearchStatus,
};
use nsbox_core::format::{read_box, write_box, Manifest, ManifestEntry};
use nsbox_core::measures::{decompose_over_vertices, nl};
use nsbox_core::ratio::{format_sig12, Ratio};
use nsbox_core::secrecy::{
    detect_noisy_pr, grid, noisy_pr, noisy_pr_werner, simulate_protocol, sweep, thresholds, thresholds_for_werner,
    write_sweep_csv, FamilyParam, SimComparison, SweepRow,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::expr::parse_expr;
use crate::report::{AnalyzeReport, Exact};
use crate::{
    AnalyzeArgs, Command, DecomposeArgs, DecomposeMode, Failure, KeyrateArgs, MakeArgs, SimulateArgs, SweepParam,
};

pub fn run(command: Command, out: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Make(args) => make(args, out),
        Command::Analyze(args) => analyze(args, out),
        Command::Decompose(args) => decompose(args, out),
        Command::Keyrate(args) => keyrate(args, out),
        Command::Simulate(args) => simulate(args, out),
    }
}

/// Reads a document; format errors are usage errors, invalid boxes exit 2.
fn load_valid_box(path: &Path) -> Result<NsBox, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let b = read_box(&text).with_context(|| format!("parsing {}", path.display()))?;
    let report = b.validate();
    if !report.is_valid() {
        return Err(Failure::invalid_box(InvalidBox(report)));
    }
    Ok(b)
}

fn parse_ratio(flag: &str, text: &str) -> anyhow::Result<Ratio> {
    text.parse().map_err(|e| anyhow!("--{flag}: {e}"))
}

fn parse_label(text: &str) -> anyhow::Result<[u8; 3]> {
    match format!("pr:{text}").parse::<VertexId>() {
        Ok(VertexId::Pr(label)) => Ok(label),
        _ => bail!("--label: expected three binary digits, got {text:?}"),
    }
}

fn make(args: MakeArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let b = parse_expr(&args.expr)?;
    let doc = write_box(&b);
    match args.out {
        Some(path) => fs::write(&path, doc).with_context(|| format!("writing {}", path.display()))?,
        None => out.write_all(doc.as_bytes())?,
    }
    Ok(())
}

fn analyze(args: AnalyzeArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let b = load_valid_box(&args.path)?;
    let report = AnalyzeReport::new(&b);
    if args.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    } else {
        out.write_all(report.render().as_bytes())?;
    }
    Ok(())
}

struct Components {
    manifest: Manifest,
    boxes: Vec<NsBox>,
}

impl Components {
    fn new(mode: &str) -> Self {
        Components { manifest: Manifest::new(mode), boxes: Vec::new() }
    }

    fn push(&mut self, label: String, weight: Ratio, b: NsBox) {
        let file = format!("{}.json", label.replace(':', "-"));
        self.manifest.components.push(ManifestEntry { label, weight, file });
        self.boxes.push(b);
    }

    fn check(&mut self, key: &str, value: Value) {
        self.manifest.checks.insert(key.to_string(), value);
    }

    fn reconstructs(&self, target: &NsBox) -> bool {
        let m = Mixture::new(
            self.manifest.components.iter().zip(&self.boxes).map(|(c, b)| (c.weight.clone(), b.clone())).collect(),
        );
        mix(&m).is_ok_and(|b| &b == target)
    }

    fn emit(&self, out_dir: Option<&Path>, out: &mut dyn Write) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest)?;
        if let Some(dir) = out_dir {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for (entry, b) in self.manifest.components.iter().zip(&self.boxes) {
                let path = dir.join(&entry.file);
                fs::write(&path, write_box(b)).with_context(|| format!("writing {}", path.display()))?;
            }
            let path = dir.join("manifest.json");
            fs::write(&path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))?;
        }
        writeln!(out, "{text}")?;
        Ok(())
    }
}

fn decompose(args: DecomposeArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let b = load_valid_box(&args.path)?;
    let mut parts;
    match args.mode {
        DecomposeMode::PrFraction => {
            parts = Components::new("pr-fraction");
            let d = match decompose_pr_fraction(&b) {
                Ok(d) => d,
                Err(DecompositionError::NoCertifiedResidual { p_pr, diagnostics }) => {
                    let report = json!({ "p_pr": p_pr, "diagnostics": diagnostics });
                    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
                    return Err(Failure::verification(anyhow!(
                        "no PR vertex leaves a certified residual at p_pr = {p_pr}"
                    )));
                }
                Err(e) => return Err(Failure::invalid_box(e)),
            };
            if let Some(v) = d.pr_vertex {
                parts.push(v.to_string(), d.p_pr.clone(), v.to_box());
            }
            parts.push("residual".into(), Ratio::one() - &d.p_pr, d.residual.clone());
            parts.check("reconstructs", d.checks.reconstructs.into());
            parts.check("residual_valid", d.checks.residual_valid.into());
            parts.check("residual_local", d.checks.residual_local.into());
            parts.check("residual_nl_zero", d.checks.residual_nl_zero.into());
            let passing: Vec<String> = d.passing_candidates.iter().map(ToString::to_string).collect();
            parts.check("passing_candidates", passing.into());
        }
        DecomposeMode::Vertex => {
            parts = Components::new("vertex");
            let d = decompose_over_vertices(&b).map_err(Failure::invalid_box)?;
            for (v, w) in d.weights {
                parts.push(v.to_string(), w, v.to_box());
            }
            let ok = parts.reconstructs(&b);
            parts.check("reconstructs", ok.into());
        }
        DecomposeMode::Dim2 => {
            parts = Components::new("dim2");
            let config = Dim2SearchConfig { restarts: args.restarts as usize, seed: args.seed, ..Default::default() };
            let result = find_dim2_model(&b, &config);
            let found = result.status == SearchStatus::Found;
            if let Some(model) = result.model.filter(|_| found) {
                let exact = model.rationalize();
                for lambda in 0..2 {
                    let product = NsBox::product(&exact.alice[lambda], &exact.bob[lambda]);
                    parts.push(format!("lambda{lambda}"), exact.weights[lambda].clone(), product);
                }
                let ok = parts.reconstructs(&b);
                parts.check("exact_reconstruction", ok.into());
            }
            parts.check("status", serde_json::to_value(result.status)?);
            parts.check("residual_l1", result.residual_l1.into());
            parts.check("restarts_used", result.restarts_used.into());
            // Not finding a model proves nothing when NL vanishes.
            parts.check("inconclusive", (!found && nl(&b).nl.is_zero()).into());
        }
    }
    parts.emit(args.out_dir.as_deref(), out)?;
    Ok(())
}

fn keyrate(args: KeyrateArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let rows = match &args.box_path {
        Some(path) => {
            let b = load_valid_box(path)?;
            let flags = detect_noisy_pr(&b).map(|(_, p)| thresholds(&p));
            vec![SweepRow::from_box(nl(&b).pr_fraction(), &b, flags)]
        }
        None => {
            let label = parse_label(&args.label)?;
            if let Some(p) = &args.p {
                let p = parse_ratio("p", p)?;
                vec![SweepRow::from_box(p.clone(), &noisy_pr(label, &p)?, Some(thresholds(&p)))]
            } else if let Some(w) = &args.werner {
                let w = parse_ratio("werner", w)?;
                vec![SweepRow::from_box(w.clone(), &noisy_pr_werner(label, &w)?, Some(thresholds_for_werner(&w)))]
            } else if let Some(spec) = &args.sweep {
                let parts: Vec<&str> = spec.split(':').collect();
                let [lo, hi, n] = parts[..] else {
                    return Err(anyhow!("--sweep: expected lo:hi:n, got {spec:?}").into());
                };
                let n: usize = n.parse().map_err(|e| anyhow!("--sweep: point count {n:?}: {e}"))?;
                let points = grid(&parse_ratio("sweep", lo)?, &parse_ratio("sweep", hi)?, n)?;
                let param = match args.param {
                    SweepParam::P => FamilyParam::PrFraction,
                    SweepParam::Werner => FamilyParam::Werner,
                };
                sweep(label, param, &points)?
            } else {
                return Err(anyhow!("--family needs one of --p, --werner or --sweep").into());
            }
        }
    };
    if args.csv {
        write_sweep_csv(&mut *out, &rows)?;
    } else {
        let name =
            if args.werner.is_some() || (args.sweep.is_some() && args.param == SweepParam::Werner) { "W" } else { "p" };
        for row in &rows {
            write!(
                out,
                "{name} = {}: nl = {}, max |B| = {}, i_ab = {}, key_rate >= {}",
                Exact(&row.param),
                Exact(&row.nl),
                Exact(&row.chsh_max),
                format_sig12(row.i_ab),
                format_sig12(row.key_rate)
            )?;
            if let Some(f) = &row.flags {
                write!(
                    out,
                    ", bell_nonlocal = {}, entanglement_certified = {}, quantum_realizable = {}",
                    f.bell_nonlocal, f.entanglement_certified, f.quantum_realizable
                )?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

/// What `simulate` prints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub seed: u64,
    pub rounds: u64,
    /// Rounds per input pair, `[x][y]`.
    pub pair_counts: [[u64; 2]; 2],
    /// `[x, y]` pairs never drawn.
    pub unvisited_pairs: Vec<[u8; 2]>,
    /// `None` while some input pair is unvisited.
    pub empirical_nl: Option<Ratio>,
    pub empirical_i_ab: f64,
    pub empirical_key_rate: f64,
    pub comparison: Option<SimComparison>,
}

impl SimulateSummary {
    fn render(&self) -> String {
        let mut s = format!("seed = {}\nrounds = {}\n", self.seed, self.rounds);
        let c = &self.pair_counts;
        s += &format!("input pairs: 00 = {}, 01 = {}, 10 = {}, 11 = {}\n", c[0][0], c[0][1], c[1][0], c[1][1]);
        match &self.empirical_nl {
            Some(v) => s += &format!("empirical nl = {}\n", Exact(v)),
            None => {
                let missing: Vec<String> = self.unvisited_pairs.iter().map(|p| format!("{}{}", p[0], p[1])).collect();
                s += &format!("empirical nl = unavailable (unvisited input pairs: {})\n", missing.join(", "));
            }
        }
        s += &format!("empirical i_ab = {}\n", format_sig12(self.empirical_i_ab));
        s += &format!("empirical key_rate >= {}\n", format_sig12(self.empirical_key_rate));
        if let Some(cmp) = &self.comparison {
            s += &format!(
                "nl: analytic {}, se {}, z {}\n",
                format_sig12(cmp.analytic_nl),
                format_sig12(cmp.nl_standard_error),
                format_sig12(cmp.nl_z)
            );
            s += &format!(
                "i_ab: analytic {}, se {}, z {}\n",
                format_sig12(cmp.analytic_i_ab),
                format_sig12(cmp.i_ab_standard_error),
                format_sig12(cmp.i_ab_z)
            );
        }
        s
    }
}

fn simulate(args: SimulateArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let b = match (&args.box_path, &args.p) {
        (Some(path), _) => load_valid_box(path)?,
        (None, Some(p)) => noisy_pr(parse_label(&args.label)?, &parse_ratio("p", p)?)?,
        (None, None) => return Err(anyhow!("--family needs --p").into()),
    };
    let t = simulate_protocol(&b, args.rounds, args.seed);
    if let Some(path) = &args.records {
        let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        t.write_records(io::BufWriter::new(file))?;
    }
    let pair_counts = t.pair_counts();
    let unvisited_pairs =
        (0..4u8).map(|k| [k >> 1, k & 1]).filter(|p| pair_counts[p[0] as usize][p[1] as usize] == 0).collect();
    let comparison = if args.compare_analytic { t.compare(&b) } else { None };
    let summary = SimulateSummary {
        seed: t.seed,
        rounds: t.rounds,
        pair_counts,
        unvisited_pairs,
        empirical_nl: t.empirical_nl.as_ref().map(|r| r.nl.clone()),
        empirical_i_ab: t.empirical_key_rate.i_ab,
        empirical_key_rate: t.empirical_key_rate.key_rate_lower_bound,
        comparison,
    };
    if args.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?;
    } else {
        out.write_all(summary.render().as_bytes())?;
        if args.compare_analytic && summary.comparison.is_none() {
            writeln!(out, "comparison unavailable: some input pair was never drawn")?;
        }
    }
    Ok(())
}

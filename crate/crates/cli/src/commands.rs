use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tfqkd::data::{self, AttenuationRow, ComboRow, Dataset, Schema};
use tfqkd::keyrates::{model_report, report_from_tallies, supremacy_report};
use tfqkd::linkmodel::{sweep_loss, FeedbackParams};
use tfqkd::params::{ChannelParams, DetectorParams, ProtocolConfig, ProtocolVariant, ULL_FIBRE_ALPHA_DB_PER_KM};
use tfqkd::report::KeyRateReport;
use tfqkd::simulator::{run_session, SessionConfig};
use tfqkd::tallies::MeasurementTallies;
use tfqkd::units::equivalent_distance_km;
use tfqkd::validation::{self, MonteCarloSizes, Tolerances};

use crate::output::{config_hash, csv_preamble, field, json_with_hash, opt, write_out};
use crate::{CliError, IngestArgs, KeyrateArgs, SimulateArgs, SweepArgs, ValidateArgs};

fn parse_protocol(s: &str) -> Result<ProtocolVariant, CliError> {
    Ok(s.parse::<ProtocolVariant>()?)
}

fn parse_schema(s: &str) -> Result<Schema, CliError> {
    Ok(s.parse::<Schema>()?)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn ingest(a: IngestArgs) -> Result<(), CliError> {
    let schema = parse_schema(&a.schema)?;
    let got = data::ingest(&a.path, schema, a.strict)?;
    println!("{}: {} rows", a.path.display(), got.data.len());
    for w in &got.warnings {
        println!("warning: line {}: {}", w.line, w.message);
    }
    if let Some(dir) = &a.out.out {
        let hash = config_hash(&got.data)?;
        let text = match &got.data {
            Dataset::Session(_) => json_with_hash(&hash, &got.data)?,
            d => data::emit(d, &[format!("config-sha256: {hash}")])?,
        };
        let name = match schema {
            Schema::Session => "ingested.json",
            _ => "ingested.csv",
        };
        let p = write_out(dir, name, text.as_bytes())?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct KeyrateRow {
    row: usize,
    loss_db: Option<f64>,
    distance_km: Option<f64>,
    published_bps: Option<f64>,
    report: KeyRateReport,
}

#[derive(Debug, Serialize)]
struct KeyrateSettings<'a> {
    protocol: &'a ProtocolConfig,
    input: String,
    schema: Schema,
    measured_w: bool,
}

/// Intensity pairs and other inputs a protocol needs that a schema lacks.
fn missing_inputs(variant: ProtocolVariant, schema: Schema) -> Vec<&'static str> {
    match (variant, schema) {
        (ProtocolVariant::Curty, Schema::Attenuation) => {
            vec!["(u, v)", "(u, w)", "(v, w)", "(w, w)", "encoding-basis (u, u) gain and QBER"]
        }
        (ProtocolVariant::Original, Schema::Combos) => vec!["QBER of (u, u)", "QBER of (v, v)"],
        (ProtocolVariant::SendNotSend, Schema::Combos) => vec![
            "(u, 0)",
            "(0, u)",
            "(0, 0)",
            "QBER of (u, u)",
            "QBER of (v, v)",
        ],
        _ => Vec::new(),
    }
}

fn rates_from_tallies(t: &MeasurementTallies, cfg: &ProtocolConfig, measured_w: bool) -> Result<KeyRateReport, CliError> {
    Ok(report_from_tallies(t, cfg, DetectorParams::default().clock_rate_hz, measured_w)?)
}

fn attenuation_published(r: &AttenuationRow, v: ProtocolVariant) -> Option<f64> {
    match v {
        ProtocolVariant::Original => r.skr_original_bps,
        ProtocolVariant::SendNotSend => r.skr_sns_bps,
        ProtocolVariant::Curty => None,
    }
}

pub fn keyrate(a: KeyrateArgs) -> Result<(), CliError> {
    let variant = parse_protocol(&a.protocol)?;
    let cfg = match &a.config {
        Some(p) => read_json::<ProtocolConfig>(p)?,
        None => ProtocolConfig::reference(variant),
    };
    if cfg.variant != variant {
        return Err(CliError::Input(format!(
            "config is for {} but --protocol is {variant}",
            cfg.variant
        )));
    }
    cfg.validate()?;
    let default_schema = if variant == ProtocolVariant::Curty {
        Schema::Combos
    } else {
        Schema::Attenuation
    };
    let schema = match &a.schema {
        Some(s) => parse_schema(s)?,
        None => default_schema,
    };
    let (ingested, input_name) = match &a.input {
        Some(p) => (data::ingest(p, schema, a.strict)?, p.display().to_string()),
        None => {
            let text = match schema {
                Schema::Combos => data::BUNDLED_COMBOS_CSV,
                Schema::Attenuation => data::BUNDLED_ATTENUATION_CSV,
                Schema::Session => return Err(CliError::Input("session input needs --input".into())),
            };
            (data::ingest_str(text, schema, a.strict)?, format!("bundled {schema:?}").to_lowercase())
        }
    };
    for w in &ingested.warnings {
        eprintln!("warning: line {}: {}", w.line, w.message);
    }
    let missing = missing_inputs(variant, schema);
    if !missing.is_empty() {
        return Err(CliError::Input(format!(
            "{variant} needs inputs the {schema:?} table does not have: {}",
            missing.join(", ")
        )));
    }
    let clock = DetectorParams::default().clock_rate_hz;
    let mut rows = Vec::new();
    let locate = |loss: f64, r: KeyRateReport| r.at_loss(loss, clock);
    match &ingested.data {
        Dataset::Attenuation(rs) => {
            for (i, r) in rs.iter().enumerate() {
                let rep = locate(r.total_loss_db, rates_from_tallies(&r.to_tallies()?, &cfg, a.measured_w)?)?;
                rows.push(row(i, Some(r.total_loss_db), attenuation_published(r, variant), rep));
            }
        }
        Dataset::Combos(rs) => {
            for (i, r) in rs.iter().enumerate() {
                let rep = locate(r.total_loss_db, rates_from_tallies(&r.to_tallies()?, &cfg, a.measured_w)?)?;
                rows.push(row(i, Some(r.total_loss_db), combo_published(r), rep));
            }
        }
        Dataset::Session(ts) => {
            for (i, t) in ts.iter().enumerate() {
                rows.push(row(i, None, None, rates_from_tallies(t, &cfg, a.measured_w)?));
            }
        }
    }

    let settings = KeyrateSettings {
        protocol: &cfg,
        input: input_name,
        schema,
        measured_w: a.measured_w,
    };
    let hash = config_hash(&settings)?;
    println!("# config-sha256: {hash}");
    println!(
        "{:>8} {:>9} {:>14} {:>14} {:>14} {:>8}  flags",
        "loss_db", "dist_km", "skr_bps", "published_bps", "skc0_bps", "ratio"
    );
    for r in &rows {
        let rep = &r.report;
        println!(
            "{:>8} {:>9} {:>14.6} {:>14} {:>14} {:>8}  {}",
            r.loss_db.map(|l| format!("{l:.1}")).unwrap_or("-".into()),
            r.distance_km.map(|d| format!("{d:.1}")).unwrap_or("-".into()),
            rep.skr_bits_per_second,
            r.published_bps.map(|p| format!("{p:.4}")).unwrap_or("-".into()),
            rep.skc0_ideal_bps.map(|p| format!("{p:.4}")).unwrap_or("-".into()),
            rep.supremacy_ratio.map(|p| format!("{p:.3}")).unwrap_or("-".into()),
            flags(rep)
        );
    }
    if let Some(dir) = &a.out.out {
        let mut csv = csv_preamble(&hash, &[format!("protocol: {variant}")]);
        csv.push_str("row,loss_db,distance_km,skr_bps,skr_bits_per_gate,published_bps,y0_lower,y1_lower,e1_upper,e1x_upper,skc0_ideal_bps,skc0_realistic_bps,supremacy_ratio,flags\n");
        for r in &rows {
            let rep = &r.report;
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.row,
                opt(r.loss_db),
                opt(r.distance_km),
                rep.skr_bits_per_second,
                rep.skr_bits_per_gate,
                opt(r.published_bps),
                opt(rep.y0_lower),
                opt(rep.y1_lower),
                opt(rep.e1_upper),
                opt(rep.e1x_upper),
                opt(rep.skc0_ideal_bps),
                opt(rep.skc0_realistic_bps),
                opt(rep.supremacy_ratio),
                field(&flags(rep))
            );
        }
        let p1 = write_out(dir, "keyrate.csv", csv.as_bytes())?;
        let body = serde_json::json!({ "settings": settings, "rows": rows });
        let p2 = write_out(dir, "keyrate.json", json_with_hash(&hash, &body)?.as_bytes())?;
        println!("wrote {} and {}", p1.display(), p2.display());
    }
    Ok(())
}

fn combo_published(r: &ComboRow) -> Option<f64> {
    r.skr_curty_bps
}

fn row(i: usize, loss: Option<f64>, published: Option<f64>, report: KeyRateReport) -> KeyrateRow {
    KeyrateRow {
        row: i,
        loss_db: loss,
        distance_km: loss.map(|l| equivalent_distance_km(l, ULL_FIBRE_ALPHA_DB_PER_KM)),
        published_bps: published,
        report,
    }
}

fn flags(r: &KeyRateReport) -> String {
    let v: Vec<String> = r
        .flags
        .iter()
        .map(|f| serde_json::to_value(f).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
        .collect();
    v.join(";")
}

/// Sweep settings file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub protocol: String,
    #[serde(default)]
    pub protocol_config: Option<ProtocolConfig>,
    pub start_db: f64,
    pub stop_db: f64,
    pub step_db: f64,
    #[serde(default)]
    pub channel: ChannelParams,
    #[serde(default)]
    pub detector: DetectorParams,
    #[serde(default)]
    pub feedback: FeedbackParams,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            protocol: ProtocolVariant::SendNotSend.name().into(),
            protocol_config: None,
            start_db: 10.0,
            stop_db: 100.0,
            step_db: 1.0,
            channel: ChannelParams::default(),
            detector: DetectorParams::default(),
            feedback: FeedbackParams::default(),
        }
    }
}

impl SweepConfig {
    fn grid(&self) -> Result<Vec<f64>, CliError> {
        let ok = self.step_db > 0.0 && self.stop_db >= self.start_db && self.start_db >= 0.0;
        if !ok || !self.step_db.is_finite() || !self.stop_db.is_finite() {
            return Err(CliError::Input(format!(
                "invalid grid: start {} stop {} step {}",
                self.start_db, self.stop_db, self.step_db
            )));
        }
        let n = ((self.stop_db - self.start_db) / self.step_db + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| self.start_db + i as f64 * self.step_db).collect())
    }
}

pub fn sweep(a: SweepArgs) -> Result<(), CliError> {
    let mut sc = match &a.config {
        Some(p) => read_json::<SweepConfig>(p)?,
        None => SweepConfig::default(),
    };
    if let Some(p) = &a.protocol {
        sc.protocol = p.clone();
        if sc.protocol_config.map(|c| c.variant) != Some(parse_protocol(p)?) {
            sc.protocol_config = None;
        }
    }
    let variant = parse_protocol(&sc.protocol)?;
    let cfg = sc.protocol_config.unwrap_or_else(|| ProtocolConfig::reference(variant));
    if cfg.variant != variant {
        return Err(CliError::Input("protocol_config variant differs from protocol".into()));
    }
    let grid = sc.grid()?;
    let points = sweep_loss(&cfg, &grid, &sc.channel, &sc.detector, &sc.feedback)?;
    let clock = sc.detector.clock_rate_hz;
    let reports = points
        .iter()
        .map(|p| model_report(p, &cfg, clock))
        .collect::<Result<Vec<_>, _>>()?;
    let sup = supremacy_report(&reports, clock)?;
    let hash = config_hash(&sc)?;

    let mut csv = csv_preamble(&hash, &[format!("protocol: {variant}")]);
    csv.push_str("loss_db,distance_km,skr_bps,skc0_ideal_bps,skc0_realistic_bps,beats_ideal,beats_realistic,qber_signal,e1_upper,e1x_upper,flags\n");
    for ((p, r), s) in points.iter().zip(&reports).zip(&sup) {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{}",
            p.loss_db,
            equivalent_distance_km(p.loss_db, sc.channel.fibre_alpha_db_per_km),
            r.skr_bits_per_second,
            s.skc0_ideal_bps,
            s.skc0_realistic_bps,
            s.beats_ideal,
            s.beats_realistic,
            p.qber_signal.total,
            opt(r.e1_upper),
            opt(r.e1x_upper),
            field(&flags(r))
        );
    }
    let beats: Vec<f64> = sup.iter().filter(|s| s.beats_realistic).map(|s| s.loss_db).collect();
    println!("# config-sha256: {hash}");
    println!("{variant}: {} points from {} to {} dB", grid.len(), grid[0], grid[grid.len() - 1]);
    match (beats.first(), beats.last()) {
        (Some(lo), Some(hi)) => println!("above the realistic capacity from {lo} to {hi} dB"),
        _ => println!("never above the realistic capacity"),
    }
    match &a.out.out {
        Some(dir) => {
            let p1 = write_out(dir, "sweep.csv", csv.as_bytes())?;
            let body = serde_json::json!({ "config": sc, "reports": reports, "supremacy": sup });
            let p2 = write_out(dir, "sweep.json", json_with_hash(&hash, &body)?.as_bytes())?;
            println!("wrote {} and {}", p1.display(), p2.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let mut s: SessionConfig = read_json(&a.config)?;
    if let Some(seed) = a.seed {
        s.rng_seed = seed;
    }
    let rep = run_session(&s)?;
    let hash = config_hash(&s)?;
    let m = &rep.summary;
    println!("# config-sha256: {hash}");
    println!("gates {} over {:.3} s", m.gates, m.duration_s);
    println!("clicks D1 {} D2 {} double {}", m.d1, m.d2, m.double_clicks);
    for r in &rep.counts {
        println!(
            "  {} {:?}: gain {:.6e}{}",
            r.key.pair_label(),
            r.key.basis,
            r.counts.gain(),
            r.counts
                .qber_combined()
                .map(|q| format!(", QBER {:.3}%", 100.0 * q))
                .unwrap_or_default()
        );
    }
    match m.key_qber {
        Some(q) => println!("key bits {} with QBER {:.3}%", m.key_bits, 100.0 * q),
        None => println!("no key bits"),
    }
    println!("lock losses {}", m.lock_losses);
    if let Some(dir) = &a.out.out {
        let p1 = write_out(dir, "session.json", json_with_hash(&hash, &rep)?.as_bytes())?;
        let trace = csv_preamble(&hash, &[]) + &rep.trace_csv();
        let p2 = write_out(dir, "qber_trace.csv", trace.as_bytes())?;
        println!("wrote {} and {}", p1.display(), p2.display());
    }
    Ok(())
}

fn load_rows(path: &Option<std::path::PathBuf>) -> Result<Vec<AttenuationRow>, CliError> {
    match path {
        None => Ok(data::bundled_attenuation_rows()?),
        Some(p) => match data::ingest(p, Schema::Attenuation, false)?.data {
            Dataset::Attenuation(r) => Ok(r),
            _ => unreachable!(),
        },
    }
}

fn load_combo(path: &Option<std::path::PathBuf>) -> Result<ComboRow, CliError> {
    let rows = match path {
        None => data::bundled_combo_rows()?,
        Some(p) => match data::ingest(p, Schema::Combos, false)?.data {
            Dataset::Combos(r) => r,
            _ => unreachable!(),
        },
    };
    rows.into_iter()
        .next()
        .ok_or_else(|| CliError::Input("combination table has no rows".into()))
}

pub fn validate(a: ValidateArgs) -> Result<(), CliError> {
    let tol = match a.tolerance {
        Some(p) if !(p > 0.0) => return Err(CliError::Input(format!("tolerance {p}% must be positive"))),
        Some(p) => Tolerances::default().with_override(p),
        None => Tolerances::default(),
    };
    let mut mc = MonteCarloSizes::default();
    if a.quick {
        mc = mc.scaled(0.05);
    }
    if let Some(s) = a.seed {
        mc.seed = s;
    }
    let rows = load_rows(&a.attenuation_table)?;
    let combo = load_combo(&a.combo_table)?;
    let hash = config_hash(&(&tol, &mc))?;
    println!("# config-sha256: {hash}");
    match tol.override_pct {
        Some(p) => println!("# tolerance override: {p}%"),
        None => println!("# tolerance override: none"),
    }
    if a.quick {
        println!("# quick mode: Monte Carlo sizes scaled by 0.05");
    }
    let report = validation::run_all(&rows, &combo, &tol, &mc)?;
    for o in &report.outcomes {
        println!("{}", o.line());
        if a.verbose || !o.passed() {
            println!("{}", o.details());
        }
    }
    if let Some(dir) = &a.out.out {
        let p = write_out(dir, "validation.json", json_with_hash(&hash, &report)?.as_bytes())?;
        println!("wrote {}", p.display());
    }
    let failed: Vec<String> = report
        .outcomes
        .iter()
        .filter(|o| !o.passed())
        .map(|o| o.id.to_string())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("criteria {} failed", failed.join(", "))))
    }
}

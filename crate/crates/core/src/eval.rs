//! Held-out predictive log probability and model comparison tables.

use std::fmt::Write as _;
use std::path::Path;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::bec::{BecIndex, BecParams};
use crate::corpus::Transcript;
use crate::error::{Error, Result};
use crate::math::{next_down, ordered_sum};
use crate::sampler::{Draw, Model};

/// A train/test partition at time `t_star`.
#[derive(Debug, Clone)]
pub struct Split {
    pub t_star: f64,
    /// Requested test-token fraction.
    pub fraction: f64,
    /// Utterances ending at or before `t_star`.
    pub train: Transcript,
    /// Utterances starting after `t_star`.
    pub test: Transcript,
    /// Train and test together; utterances straddling `t_star` are in neither.
    pub history: Transcript,
}

impl Split {
    pub fn test_token_fraction(&self) -> f64 {
        let total = self.history.num_tokens();
        self.test.num_tokens() as f64 / total as f64
    }
}

/// Splits at the latest time that leaves at least `fraction` of all tokens in
/// the test half. Utterances starting exactly at the chosen boundary go to the
/// test half; those still in progress at the boundary are dropped.
pub fn make_split(transcript: &Transcript, fraction: f64) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Usage(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let utts = transcript.utterances();
    let n = utts.len();
    if n < 2 {
        return Err(Error::Data("need at least two utterances to split".into()));
    }
    let total = transcript.num_tokens() as f64;
    let need = fraction * total;
    let mut k = n;
    let mut acc = 0usize;
    while k > 0 && (acc as f64) < need - 1e-12 * total {
        k -= 1;
        acc += utts[k].tokens.len();
    }
    let k = k.clamp(1, n - 1);
    let t_star = next_down(utts[k].start);

    let train = transcript.filtered(|u| u.end() <= t_star);
    let test = transcript.filtered(|u| u.start > t_star);
    if train.utterances().is_empty() || test.utterances().is_empty() {
        return Err(Error::Data(format!(
            "degenerate split at t* = {t_star}: {} train and {} test utterances",
            train.utterances().len(),
            test.utterances().len()
        )));
    }
    let history = transcript.filtered(|u| u.end() <= t_star || u.start > t_star);
    Ok(Split {
        t_star,
        fraction,
        train,
        test,
        history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    #[serde(default)]
    pub dataset: String,
    pub fraction: f64,
    /// Mean over posterior draws of the held-out log probability.
    pub mean: f64,
    /// Population standard deviation across draws.
    pub sd: f64,
    pub draws: usize,
    #[serde(default)]
    pub per_draw: Vec<f64>,
}

/// Language-model parameters implied by one draw of `model`.
fn language_params(model: Model, draw: &Draw) -> Result<BecParams> {
    let missing = || {
        Error::Data(format!(
            "draw at sweep {} lacks parameters for `{model}`",
            draw.sweep
        ))
    };
    match model {
        Model::Bec | Model::Unigram | Model::Untied => draw.bec.clone().ok_or_else(missing),
        Model::Tied => {
            let mut bec = draw.bec.clone().ok_or_else(missing)?;
            let h = draw.hawkes.as_ref().ok_or_else(missing)?;
            let r = draw.r.ok_or_else(missing)?;
            bec.influence = h.excitation.map(|v| r * v);
            Ok(bec)
        }
        Model::Hawkes => Err(Error::Usage(
            "held-out word probability needs a model with a language component".into(),
        )),
    }
}

/// Log probability of the utterances of `history` selected by `is_target`,
/// conditioning on every earlier utterance of `history`.
pub fn targets_log_prob(
    params: &BecParams,
    history: &Transcript,
    unigram: bool,
    is_target: impl FnMut(&crate::corpus::Utterance) -> bool,
) -> Result<f64> {
    let index = BecIndex::with_targets(history, is_target);
    check_dims(params, &index)?;
    if unigram {
        index.unigram_log_likelihood(params)
    } else {
        index.log_likelihood(params)
    }
}

fn check_dims(params: &BecParams, index: &BecIndex) -> Result<()> {
    params.validate()?;
    if params.vocab_size() != index.vocab_size() {
        return Err(Error::Data(format!(
            "vocabulary mismatch: parameters have {} types, data has {}",
            params.vocab_size(),
            index.vocab_size()
        )));
    }
    if params.num_persons() != index.num_persons() {
        return Err(Error::Data(format!(
            "person mismatch: parameters have {} persons, data has {}",
            params.num_persons(),
            index.num_persons()
        )));
    }
    Ok(())
}

/// Mean and spread over posterior draws of the test-set log probability.
/// Test utterances condition on the training data and on earlier test
/// utterances.
pub fn heldout_log_prob(model: Model, draws: &[Draw], split: &Split) -> Result<EvalReport> {
    let threads = thread::available_parallelism().map_or(1, |n| n.get());
    heldout_log_prob_threaded(model, draws, split, threads)
}

/// [`heldout_log_prob`] using at most `threads` worker threads. The result
/// does not depend on the thread count.
pub fn heldout_log_prob_threaded(
    model: Model,
    draws: &[Draw],
    split: &Split,
    threads: usize,
) -> Result<EvalReport> {
    if draws.is_empty() {
        return Err(Error::Data("no posterior draws to evaluate".into()));
    }
    if split.train.vocabulary() != split.test.vocabulary() {
        return Err(Error::Data("train and test vocabularies differ".into()));
    }
    let params: Vec<BecParams> = draws
        .iter()
        .map(|d| language_params(model, d))
        .collect::<Result<_>>()?;
    let t_star = split.t_star;
    let index = BecIndex::with_targets(&split.history, |u| u.start > t_star);
    for p in &params {
        check_dims(p, &index)?;
    }
    let unigram = model == Model::Unigram;
    let eval = |p: &BecParams| {
        if unigram {
            index.unigram_log_likelihood(p)
        } else {
            index.log_likelihood(p)
        }
    };

    let workers = threads.clamp(1, params.len());
    let chunk = params.len().div_ceil(workers);
    let per_draw: Vec<f64> = thread::scope(|s| {
        let handles: Vec<_> = params
            .chunks(chunk)
            .map(|c| s.spawn(|| c.iter().map(eval).collect::<Result<Vec<f64>>>()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation thread panicked"))
            .collect::<Result<Vec<Vec<f64>>>>()
    })?
    .into_iter()
    .flatten()
    .collect();

    let s = per_draw.len() as f64;
    let mean = ordered_sum(&per_draw) / s;
    let sq: Vec<f64> = per_draw.iter().map(|x| (x - mean) * (x - mean)).collect();
    let sd = (ordered_sum(&sq) / s).sqrt();
    Ok(EvalReport {
        model: model.to_string(),
        dataset: String::new(),
        fraction: split.fraction,
        mean,
        sd,
        draws: per_draw.len(),
        per_draw,
    })
}

/// A score produced elsewhere (for example by a topic model), shown as given.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalScore {
    pub model: String,
    pub dataset: String,
    /// Applies to every fraction of the dataset when absent.
    pub fraction: Option<f64>,
    pub logprob: f64,
    /// The score exactly as written in the input.
    pub text: String,
}

/// Reads `model,dataset,logprob[,fraction]` rows.
pub fn load_external_scores(path: &Path) -> Result<Vec<ExternalScore>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(m), Some(d), Some(l)) = (col("model"), col("dataset"), col("logprob")) else {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "header needs model, dataset and logprob columns".into(),
        });
    };
    let f = col("fraction");
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let get = |j: usize| rec.get(j).map(str::trim).unwrap_or("");
        let text = get(l).to_owned();
        let logprob = text
            .parse::<f64>()
            .map_err(|e| bad(format!("logprob `{text}`: {e}")))?;
        let fraction = match f.map(get) {
            None | Some("") => None,
            Some(s) => Some(
                s.parse::<f64>()
                    .map_err(|e| bad(format!("fraction `{s}`: {e}")))?,
            ),
        };
        out.push(ExternalScore {
            model: get(m).to_owned(),
            dataset: get(d).to_owned(),
            fraction,
            logprob,
            text,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub mean: f64,
    pub display: String,
    pub sd: Option<f64>,
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub dataset: String,
    pub fraction: f64,
    pub cells: Vec<Option<Cell>>,
}

/// Rows are (dataset, fraction) pairs, columns are models; the highest mean
/// in each row is marked best.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub models: Vec<String>,
    pub rows: Vec<Row>,
}

fn same_fraction(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

pub fn compare_table(reports: &[EvalReport], external: &[ExternalScore]) -> ComparisonTable {
    let mut models: Vec<String> = Vec::new();
    let mut keys: Vec<(String, f64)> = Vec::new();
    for r in reports {
        if !models.contains(&r.model) {
            models.push(r.model.clone());
        }
        if !keys
            .iter()
            .any(|(d, f)| *d == r.dataset && same_fraction(*f, r.fraction))
        {
            keys.push((r.dataset.clone(), r.fraction));
        }
    }
    for e in external {
        if !models.contains(&e.model) {
            models.push(e.model.clone());
        }
        if let Some(fr) = e.fraction {
            if !keys
                .iter()
                .any(|(d, f)| *d == e.dataset && same_fraction(*f, fr))
            {
                keys.push((e.dataset.clone(), fr));
            }
        }
    }

    let rows = keys
        .into_iter()
        .map(|(dataset, fraction)| {
            let mut cells: Vec<Option<Cell>> = models
                .iter()
                .map(|m| {
                    let internal = reports
                        .iter()
                        .rev()
                        .find(|r| {
                            r.model == *m
                                && r.dataset == dataset
                                && same_fraction(r.fraction, fraction)
                        })
                        .map(|r| Cell {
                            mean: r.mean,
                            display: format!("{:.2}", r.mean),
                            sd: Some(r.sd),
                            best: false,
                        });
                    internal.or_else(|| {
                        external
                            .iter()
                            .rev()
                            .find(|e| {
                                e.model == *m
                                    && e.dataset == dataset
                                    && e.fraction.is_none_or(|f| same_fraction(f, fraction))
                            })
                            .map(|e| Cell {
                                mean: e.logprob,
                                display: e.text.clone(),
                                sd: None,
                                best: false,
                            })
                    })
                })
                .collect();
            let best = cells
                .iter()
                .flatten()
                .map(|c| c.mean)
                .fold(f64::NEG_INFINITY, f64::max);
            for c in cells.iter_mut().flatten() {
                c.best = c.mean == best;
            }
            Row {
                dataset,
                fraction,
                cells,
            }
        })
        .collect();
    ComparisonTable { models, rows }
}

fn percent(f: f64) -> String {
    let p = f * 100.0;
    if (p - p.round()).abs() < 1e-9 {
        format!("{}%", p.round())
    } else {
        format!("{p}%")
    }
}

impl ComparisonTable {
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| Dataset | Test fraction |");
        for m in &self.models {
            let _ = write!(s, " {m} |");
        }
        s.push_str("\n|---|---|");
        s.push_str(&"---:|".repeat(self.models.len()));
        s.push('\n');
        for row in &self.rows {
            let _ = write!(s, "| {} | {} |", row.dataset, percent(row.fraction));
            for c in &row.cells {
                match c {
                    None => s.push_str(" |"),
                    Some(c) => {
                        let body = match c.sd {
                            Some(sd) => format!("{} ± {:.2}", c.display, sd),
                            None => c.display.clone(),
                        };
                        if c.best {
                            let _ = write!(s, " **{body}** |");
                        } else {
                            let _ = write!(s, " {body} |");
                        }
                    }
                }
            }
            s.push('\n');
        }
        s
    }

    /// Long format: one line per (dataset, fraction, model) with a best flag.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["dataset", "fraction", "model", "logprob", "sd", "best"])
            .expect("in-memory write");
        for row in &self.rows {
            for (m, c) in self.models.iter().zip(&row.cells) {
                if let Some(c) = c {
                    let sd = c.sd.map(|x| x.to_string()).unwrap_or_default();
                    let frac = row.fraction.to_string();
                    let best = if c.best { "1" } else { "0" };
                    w.write_record([row.dataset.as_str(), &frac, m, &c.display, &sd, best])
                        .expect("in-memory write");
                }
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Utterance, Vocabulary};
    use crate::matrix::SquareMatrix;
    use proptest::prelude::*;

    fn utt(person: usize, start: f64, duration: f64, tokens: Vec<u32>) -> Utterance {
        Utterance {
            person,
            start,
            duration,
            tokens,
        }
    }

    fn transcript(utts: Vec<Utterance>, v: usize) -> Transcript {
        Transcript::new(
            utts,
            vec!["a".into(), "b".into()],
            Vocabulary::synthetic(v),
            100.0,
        )
        .unwrap()
    }

    fn params(v: usize, rho: f64) -> BecParams {
        BecParams {
            concentration: vec![3.0, 5.0],
            inherent: vec![
                (1..=v).map(|i| i as f64).collect(),
                (1..=v).rev().map(|i| i as f64).collect(),
            ],
            influence: SquareMatrix::off_diagonal(2, rho),
            decay: vec![2.0, 4.0],
        }
    }

    fn draw(p: BecParams) -> Draw {
        Draw {
            sweep: 1,
            loglik: 0.0,
            bec: Some(p),
            hawkes: None,
            r: None,
        }
    }

    #[test]
    fn equal_lengths_put_last_two_in_test() {
        let utts = (0..10)
            .map(|i| utt(i % 2, i as f64, 0.5, vec![0, 1, 2]))
            .collect();
        let s = make_split(&transcript(utts, 3), 0.2).unwrap();
        assert_eq!(s.test.utterances().len(), 2);
        assert_eq!(s.train.utterances().len(), 8);
        assert_eq!(s.test.utterances()[0].start, 8.0);
        assert!(s.t_star < 8.0);
        assert!((s.test_token_fraction() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn extreme_fraction_gives_one_and_one() {
        let utts = vec![utt(0, 0.0, 1.0, vec![0]), utt(1, 2.0, 1.0, vec![1])];
        let s = make_split(&transcript(utts, 2), 0.999).unwrap();
        assert_eq!(s.train.utterances().len(), 1);
        assert_eq!(s.test.utterances().len(), 1);
    }

    #[test]
    fn straddler_is_in_neither_half() {
        let utts = vec![
            utt(0, 0.0, 1.0, vec![0; 5]),
            utt(1, 1.0, 10.0, vec![1; 5]),
            utt(0, 5.0, 1.0, vec![0; 5]),
            utt(1, 12.0, 1.0, vec![1; 5]),
        ];
        let s = make_split(&transcript(utts, 2), 0.4).unwrap();
        assert!(s.t_star < 5.0 && s.t_star > 1.0);
        assert_eq!(s.train.utterances().len(), 1);
        assert_eq!(s.test.utterances().len(), 2);
        assert_eq!(s.history.utterances().len(), 3);
    }

    #[test]
    fn split_errors() {
        let one = transcript(vec![utt(0, 0.0, 1.0, vec![0])], 1);
        assert!(make_split(&one, 0.1).is_err());
        let two = transcript(
            vec![utt(0, 0.0, 1.0, vec![0]), utt(1, 1.0, 1.0, vec![0])],
            1,
        );
        assert!(make_split(&two, 0.0).is_err());
        assert!(make_split(&two, 1.0).is_err());
        // The only earlier utterance overlaps the boundary: nothing left to train on.
        let overlap = transcript(
            vec![utt(0, 0.0, 5.0, vec![0]), utt(1, 1.0, 1.0, vec![0])],
            1,
        );
        assert!(matches!(make_split(&overlap, 0.5), Err(Error::Data(_))));
    }

    fn corpus() -> Transcript {
        let utts = (0..12)
            .map(|i| {
                utt(
                    i % 2,
                    i as f64 * 1.5,
                    1.0,
                    vec![(i % 4) as u32, ((i + 1) % 4) as u32, 0],
                )
            })
            .collect();
        transcript(utts, 4)
    }

    #[test]
    fn unigram_path_agrees_with_zero_influence() {
        let s = make_split(&corpus(), 0.3).unwrap();
        let p = params(4, 0.0);
        let a = heldout_log_prob(Model::Bec, &[draw(p.clone())], &s).unwrap();
        let b = heldout_log_prob(Model::Unigram, &[draw(p)], &s).unwrap();
        assert!((a.mean - b.mean).abs() < 1e-9);
        assert_eq!(a.sd, 0.0);
        assert_eq!(a.draws, 1);
    }

    #[test]
    fn report_statistics_over_draws() {
        let s = make_split(&corpus(), 0.3).unwrap();
        let draws: Vec<Draw> = [0.0, 1.0, 5.0]
            .iter()
            .map(|&r| draw(params(4, r)))
            .collect();
        let rep = heldout_log_prob(Model::Bec, &draws, &s).unwrap();
        let m = rep.per_draw.iter().sum::<f64>() / 3.0;
        assert!((rep.mean - m).abs() < 1e-12);
        assert!(rep.sd > 0.0);
        for (d, &x) in draws.iter().zip(&rep.per_draw) {
            let single = heldout_log_prob(Model::Bec, std::slice::from_ref(d), &s).unwrap();
            assert_eq!(single.mean, x);
        }
    }

    #[test]
    fn vocabulary_mismatch_is_error() {
        let s = make_split(&corpus(), 0.3).unwrap();
        let r = heldout_log_prob(Model::Bec, &[draw(params(5, 1.0))], &s);
        assert!(matches!(r, Err(Error::Data(_))));
        assert!(heldout_log_prob(Model::Bec, &[], &s).is_err());
        assert!(heldout_log_prob(Model::Hawkes, &[draw(params(4, 1.0))], &s).is_err());
    }

    #[test]
    fn tied_uses_scaled_excitation() {
        let s = make_split(&corpus(), 0.3).unwrap();
        let mut d = draw(params(4, 123.0));
        d.hawkes = Some(crate::hawkes::HawkesParams {
            base_rate: vec![1.0, 1.0],
            excitation: SquareMatrix::off_diagonal(2, 0.25),
            decay: vec![1.0, 1.0],
        });
        d.r = Some(4.0);
        let tied = heldout_log_prob(Model::Tied, std::slice::from_ref(&d), &s).unwrap();
        let direct = heldout_log_prob(Model::Bec, &[draw(params(4, 1.0))], &s).unwrap();
        assert!((tied.mean - direct.mean).abs() < 1e-12);
    }

    #[test]
    fn single_token_continuations_normalize() {
        let base = vec![
            utt(0, 0.0, 1.0, vec![0, 1]),
            utt(1, 1.5, 1.0, vec![2, 2, 3]),
        ];
        for person in 0..2 {
            let total: f64 = (0..5u32)
                .map(|v| {
                    let mut utts = base.clone();
                    utts.push(utt(person, 3.0, 0.5, vec![v]));
                    let t = transcript(utts, 5);
                    targets_log_prob(&params(5, 2.0), &t, false, |u| u.start == 3.0)
                        .unwrap()
                        .exp()
                })
                .sum();
            assert!((total - 1.0).abs() < 1e-12, "sum {total}");
        }
    }

    proptest! {
        #[test]
        fn removing_a_test_utterance_removes_its_term(drop in 0usize..4, rho in 0.0f64..5.0) {
            let s = make_split(&corpus(), 0.3).unwrap();
            let p = params(4, rho);
            let t = s.t_star;
            let full = targets_log_prob(&p, &s.history, false, |u| u.start > t).unwrap();
            let tests: Vec<f64> = s.test.utterances().iter().map(|u| u.start).collect();
            let gone = tests[drop % tests.len()];
            let rest = targets_log_prob(&p, &s.history, false, |u| u.start > t && u.start != gone).unwrap();
            let alone = targets_log_prob(&p, &s.history, false, |u| u.start == gone).unwrap();
            prop_assert!((full - rest - alone).abs() < 1e-9);
        }

        #[test]
        fn unigram_invariant_to_test_order(seed in 0u64..1000) {
            let s = make_split(&corpus(), 0.4).unwrap();
            let p = params(4, 0.0);
            let a = heldout_log_prob(Model::Unigram, &[draw(p.clone())], &s).unwrap();
            // Permute test start times among test utterances.
            let mut starts: Vec<f64> = s.test.utterances().iter().map(|u| u.start).collect();
            let n = starts.len();
            starts.rotate_left((seed as usize) % n);
            let mut utts: Vec<Utterance> = s.train.utterances().to_vec();
            for (u, &st) in s.test.utterances().iter().zip(&starts) {
                utts.push(Utterance { start: st, ..u.clone() });
            }
            let t = transcript(utts, 4);
            let s2 = make_split(&t, 0.4).unwrap();
            prop_assert_eq!(s2.test.utterances().len(), n);
            let b = heldout_log_prob(Model::Unigram, &[draw(p)], &s2).unwrap();
            prop_assert!((a.mean - b.mean).abs() < 1e-9);
        }
    }

    fn report(model: &str, mean: f64) -> EvalReport {
        EvalReport {
            model: model.into(),
            dataset: "synthetic".into(),
            fraction: 0.1,
            mean,
            sd: 1.5,
            draws: 10,
            per_draw: vec![],
        }
    }

    #[test]
    fn table_flags_best() {
        let t = compare_table(&[report("bec", -100.0), report("unigram", -120.0)], &[]);
        assert_eq!(t.rows.len(), 1);
        assert!(t.rows[0].cells[0].as_ref().unwrap().best);
        assert!(!t.rows[0].cells[1].as_ref().unwrap().best);
        let md = t.to_markdown();
        assert!(md.contains("**-100.00 ± 1.50**"), "{md}");
        assert!(t.to_csv().contains("synthetic,0.1,bec,-100.00,1.5,1"));

        let one = compare_table(&[report("bec", -5.0)], &[]);
        assert!(one.rows[0].cells[0].as_ref().unwrap().best);
    }

    #[test]
    fn external_scores_pass_through() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ext.csv");
        std::fs::write(&path, "model,dataset,logprob\nDTM,synthetic,-1.1e2\n").unwrap();
        let ext = load_external_scores(&path).unwrap();
        assert_eq!(ext[0].text, "-1.1e2");
        let t = compare_table(&[report("bec", -100.0)], &ext);
        assert_eq!(t.models, vec!["bec", "DTM"]);
        assert!(t.to_markdown().contains("| -1.1e2 |"));
        assert!(t.to_csv().contains("DTM,-1.1e2,,0"));
    }

    #[test]
    fn malformed_external_scores() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ext.csv");
        std::fs::write(&path, "model,dataset\nDTM,synthetic\n").unwrap();
        assert!(matches!(
            load_external_scores(&path),
            Err(Error::Parse { .. })
        ));
        std::fs::write(&path, "model,dataset,logprob\nDTM,synthetic,abc\n").unwrap();
        assert!(matches!(
            load_external_scores(&path),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}

//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::time::Instant;

use common::*;
use duotok::formats::{self, LogProbTable, TokenFile};
use duotok::Error;
use duotok_core::bottleneck::{gaussian_replace, ReplacementConfig};
use duotok_core::data::{segment_by_lyrics, LyricSpan, MAX_CLIP_SECONDS, MIN_CLIP_SECONDS};
use duotok_core::lmeval::{self, TableStream, UniformPredictor};
use duotok_core::losses::{
    ctc_brute_force, ctc_loss, denoised_estimate, diffusion_loss, noise_latent, si_snr, stage2_objective,
    stage3_objective, DiffusionSchedule, Prediction, Stage2Terms, Stage3Terms, StageWeights,
};
use duotok_core::rng::{self, StreamRng};
use duotok_core::simvq::{quantize_with, vq_grad_w, Codebook};
use duotok_core::tokens::{align, bitrate_kbps, TrackTokens};
use duotok_core::{FeatureSequence, Matrix, Route};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn below(r: &mut StreamRng, n: usize) -> usize {
    ((rng::uniform(r) * n as f64) as usize).min(n - 1)
}

fn random_log_probs(r: &mut StreamRng, rows: usize, cols: usize) -> Matrix {
    let mut m = Matrix::from_fn(rows, cols, |_, _| 2.0 * rng::normal(r));
    for i in 0..rows {
        let row = m.row_mut(i);
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z = row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln() + mx;
        row.iter_mut().for_each(|v| *v -= z);
    }
    m
}

fn c01_ctc() -> Outcome {
    let start = Instant::now();
    let mut r = rng::stream(101, 0);
    let mut worst: f64 = 0.0;
    let mut repeats = 0;
    for _ in 0..500 {
        let v = 1 + below(&mut r, 3);
        let len = 1 + below(&mut r, 3);
        let y: Vec<usize> = (0..len).map(|_| below(&mut r, v)).collect();
        let need = y.len() + y.windows(2).filter(|w| w[0] == w[1]).count();
        if y.windows(2).any(|w| w[0] == w[1]) {
            repeats += 1;
        }
        let u = need + below(&mut r, 6 - need + 1);
        let lp = random_log_probs(&mut r, u, v + 1);
        let fast = ctc_loss(&lp, &y).map_err(|e| e.to_string())?;
        let slow = ctc_brute_force(&lp, &y).map_err(|e| e.to_string())?;
        worst = worst.max((fast - slow).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst < 1e-9 && secs < 30.0 && repeats > 0,
        format!("max |Δ| = {worst:.2e} nats over 500 instances ({repeats} with repeated labels), {secs:.2} s"),
    )
}

fn c02_nearest_neighbour() -> Outcome {
    let start = Instant::now();
    let mut r = rng::stream(102, 0);
    let mut mismatches = 0;
    let mut frames = 0;
    for i in 0..500 {
        let k = 1 + below(&mut r, 64);
        let d = 1 + below(&mut r, 8);
        let u = 1 + below(&mut r, 256);
        let base = Codebook::random(i, 0, k, d).map_err(|e| e.to_string())?;
        let w = Matrix::from_fn(d, d, |a, b| f64::from(u8::from(a == b)) + 0.3 * rng::normal(&mut r));
        let cb = Codebook::from_parts(base.frozen().clone(), w, i).map_err(|e| e.to_string())?;
        let e = Matrix::from_fn(u, d, |_, _| 2.0 * rng::normal(&mut r));
        let fs = FeatureSequence::new(e.clone(), 25.0).map_err(|e| e.to_string())?;
        let got = quantize_with(&fs, &cb, 0.25).map_err(|e| e.to_string())?.indices;
        // effective codebook and distances recomputed from scratch
        let eff: Vec<Vec<f64>> = (0..k)
            .map(|a| (0..d).map(|j| (0..d).map(|m| cb.frozen()[(a, m)] * cb.basis()[(m, j)]).sum()).collect())
            .collect();
        for t in 0..u {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (a, row) in eff.iter().enumerate() {
                let dist: f64 = (0..d).map(|j| (e[(t, j)] - row[j]).powi(2)).sum();
                if dist < best_d {
                    best_d = dist;
                    best = a;
                }
            }
            frames += 1;
            if got[t] != best {
                mismatches += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        mismatches == 0 && secs < 10.0,
        format!("{mismatches} mismatches over {frames} frames in 500 instances, {secs:.2} s"),
    )
}

fn c03_grad_w() -> Outcome {
    let mut r = rng::stream(103, 0);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let k = 2 + below(&mut r, 15);
        let d = 1 + below(&mut r, 5);
        let u = 1 + below(&mut r, 20);
        let base = Codebook::random(i, 0, k, d).map_err(|e| e.to_string())?;
        let w = Matrix::from_fn(d, d, |a, b| f64::from(u8::from(a == b)) + 0.3 * rng::normal(&mut r));
        let cb = Codebook::from_parts(base.frozen().clone(), w, i).map_err(|e| e.to_string())?;
        let e = FeatureSequence::new(Matrix::from_fn(u, d, |_, _| rng::normal(&mut r)), 25.0).map_err(|e| e.to_string())?;
        let assign = quantize_with(&e, &cb, 0.25).map_err(|e| e.to_string())?.indices;
        let g = vq_grad_w(&e, &cb, &assign).map_err(|e| e.to_string())?;
        let loss = |w: &Matrix| -> f64 {
            let mut acc = 0.0;
            for (t, &a) in assign.iter().enumerate() {
                for j in 0..d {
                    let q: f64 = (0..d).map(|m| cb.frozen()[(a, m)] * w[(m, j)]).sum();
                    acc += (e.frame(t)[j] - q).powi(2);
                }
            }
            acc / u as f64
        };
        let h = 1e-5;
        for a in 0..d {
            for b in 0..d {
                let mut wp = cb.basis().clone();
                wp[(a, b)] += h;
                let mut wm = cb.basis().clone();
                wm[(a, b)] -= h;
                let fd = (loss(&wp) - loss(&wm)) / (2.0 * h);
                let scale = fd.abs().max(g[(a, b)].abs());
                if scale > 1e-8 {
                    worst = worst.max((g[(a, b)] - fd).abs() / scale);
                }
            }
        }
    }
    check(worst < 1e-4, format!("max relative error {worst:.2e} over 100 instances"))
}

fn c04_ppl_normalization() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for s in [2u32, 1024, 4096, 32768] {
        let idx: Vec<u32> = (0..64).map(|i| (i * 2_654_435_761u64 % s as u64) as u32).collect();
        let seq = align(
            TrackTokens::new(Route::Vocal, s, 25.0, idx.clone()).map_err(|e| e.to_string())?,
            TrackTokens::new(Route::Accompaniment, s, 25.0, idx).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        let h = lmeval::avg_cross_entropy(&UniformPredictor, &[seq], Route::Vocal).map_err(|e| e.to_string())?;
        let ppl = lmeval::ppl_at_1024(h, s as f64);
        worst = worst.max((ppl - 1024.0).abs());
        parts.push(format!("S={s}: {ppl:.9}"));
    }
    check(worst <= 1e-6, format!("{} (max dev {worst:.1e})", parts.join(", ")))
}

fn c05_reported_overall_ppl() -> Outcome {
    let rows = [
        ("Duo-Tok", 3.759, 6.0024, 32768.0, 4.75, 0.02),
        ("LeVo", 6.933, 9.4622, 16384.0, 8.10, 0.02),
        ("YuE", 79.633, 78.979, 1024.0, 79.20, 0.15),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, v, a, s, want, tol) in rows {
        let h: Vec<f64> = [v, a].iter().map(|p: &f64| (p * s / 1024.0).ln()).collect();
        let got = lmeval::overall_ppl(&h, s).map_err(|e| e.to_string())?;
        ok &= (got - want).abs() <= tol;
        parts.push(format!("{name} {got:.4} vs {want} (±{tol})"));
    }
    check(ok, parts.join("; "))
}

fn c06_reported_bitrates() -> Outcome {
    let rows: [(&str, f64, &[u32], f64); 8] = [
        ("DAC", 75.0, &[1024; 8], 6.00),
        ("Encodec", 75.0, &[1024; 8], 6.00),
        ("SemantiCodec", 100.0, &[8192; 2], 1.30),
        ("WavTokenizer", 40.0, &[4096], 0.48),
        ("X-Codec", 50.0, &[1024; 8], 4.00),
        ("YuE tokenizer", 50.0, &[1024; 8], 4.00),
        ("MuCodec-LeVo", 25.0, &[16384; 2], 0.70),
        ("Duo-Tok", 25.0, &[32768; 2], 0.75),
    ];
    let mut bad = Vec::new();
    for (name, rate, sizes, want) in rows {
        let got = bitrate_kbps(rate, sizes).map_err(|e| e.to_string())?;
        if format!("{got:.2}") != format!("{want:.2}") {
            bad.push(format!("{name}: computed {got:.2}, reported {want:.2}"));
        }
    }
    check(
        bad.is_empty(),
        if bad.is_empty() {
            "all 8 rows match at two decimals".into()
        } else {
            format!("{}/8 rows match; {}", 8 - bad.len(), bad.join("; "))
        },
    )
}

fn c07_gaussian_replacement() -> Outcome {
    let (n, d) = (10_000usize, 16usize);
    let h = FeatureSequence::new(Matrix::from_fn(n, d, |t, j| (t as f64 * 0.01).sin() + j as f64), 25.0)
        .map_err(|e| e.to_string())?;
    let cfg = ReplacementConfig::stage2(107);
    let (out, mask) = gaussian_replace(&h, &cfg).map_err(|e| e.to_string())?;
    let replaced = mask.iter().filter(|&&m| m).count();
    let frac = replaced as f64 / n as f64;
    // two-sided 99.99% normal interval for a binomial proportion
    let z = 3.890_591_886_413_094;
    let half = z * (cfg.p * (1.0 - cfg.p) / n as f64).sqrt();
    let frac_ok = (frac - cfg.p).abs() <= half;
    let vals: Vec<f64> = (0..n).filter(|&t| mask[t]).flat_map(|t| out.frame(t).to_vec()).collect();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
    let var_ok = (var - cfg.sigma * cfg.sigma).abs() <= 0.03;
    let same = (0..n)
        .filter(|&t| !mask[t])
        .all(|t| out.frame(t).iter().zip(h.frame(t)).all(|(a, b)| a.to_bits() == b.to_bits()));
    check(
        frac_ok && var_ok && same,
        format!(
            "replaced fraction {frac:.4} (interval {:.4}..{:.4}), variance {var:.4}, unreplaced bit-identical: {same}",
            cfg.p - half,
            cfg.p + half
        ),
    )
}

fn c08_diffusion() -> Outcome {
    let sch = DiffusionSchedule::cosine(1000).map_err(|e| e.to_string())?;
    let mut r = rng::stream(108, 0);
    let y: Vec<f64> = (0..256).map(|_| rng::normal(&mut r)).collect();
    let eps: Vec<f64> = (0..256).map(|_| rng::normal(&mut r)).collect();
    let mut worst: f64 = 0.0;
    for t in 1..=sch.steps() {
        let (a, s) = sch.at(t).map_err(|e| e.to_string())?;
        let z = noise_latent(&y, &eps, t, &sch).map_err(|e| e.to_string())?;
        let v: Vec<f64> = y.iter().zip(&eps).map(|(yv, ev)| a * ev - s * yv).collect();
        let yh = denoised_estimate(&z, &v, t, &sch, Prediction::Velocity).map_err(|e| e.to_string())?;
        for (p, q) in yh.iter().zip(&y) {
            worst = worst.max((p - q).abs());
        }
    }
    let est: Vec<f64> = y.iter().zip(&eps).map(|(a, b)| a + 0.3 * b).collect();
    let base = si_snr(&est, &y).map_err(|e| e.to_string())?;
    let mut si_worst: f64 = 0.0;
    for _ in 0..100 {
        let c = (4.0 * rng::normal(&mut r)).exp() * if rng::uniform(&mut r) < 0.5 { -1.0 } else { 1.0 };
        let scaled: Vec<f64> = est.iter().map(|v| v * c).collect();
        let got = si_snr(&scaled, &y).map_err(|e| e.to_string())?;
        si_worst = si_worst.max((got - base).abs());
    }
    let vp = sch.is_variance_preserving(1e-12);
    check(
        worst < 1e-9 && si_worst < 1e-9 && vp,
        format!("max|ŷ - y| = {worst:.2e} over t = 1..1000; SI-SNR drift {si_worst:.2e} dB over 100 scalings"),
    )
}

fn c09_linearity() -> Outcome {
    let unit2 = Stage2Terms {
        ctc: 1.0,
        mel_sc: 1.0,
        mel_mag: 1.0,
        chr_sc: 1.0,
        chr_mag: 1.0,
        mss: 1.0,
    };
    let unit3 = Stage3Terms {
        mel_sc: 1.0,
        mel_mag: 1.0,
        chr_sc: 1.0,
        chr_mag: 1.0,
        vq: 1.0,
    };
    let w = StageWeights::default();
    let s2 = stage2_objective(&unit2, &w).map_err(|e| e.to_string())?;
    let s3 = stage3_objective(&unit3, &w).map_err(|e| e.to_string())?;
    let mut r = rng::stream(109, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let c2 = Stage2Terms {
            ctc: rng::uniform(&mut r),
            mel_sc: rng::uniform(&mut r),
            mel_mag: rng::uniform(&mut r),
            chr_sc: rng::uniform(&mut r),
            chr_mag: rng::uniform(&mut r),
            mss: rng::uniform(&mut r),
        };
        let c3 = Stage3Terms {
            mel_sc: c2.mel_sc,
            mel_mag: c2.mel_mag,
            chr_sc: c2.chr_sc,
            chr_mag: c2.chr_mag,
            vq: rng::uniform(&mut r),
        };
        let (a, b) = (rng::uniform(&mut r) * 3.0, rng::uniform(&mut r) * 3.0);
        for slot in 0..6 {
            let with = |x: f64| {
                let mut w = w;
                match slot {
                    0 => w.lambda_ctc = x,
                    1 => w.lambda_mel = x,
                    2 => w.lambda_chr = x,
                    3 => w.lambda_mss = x,
                    4 => w.lambda_vq = x,
                    _ => w.lambda_si = x,
                }
                w
            };
            // f(a + b) - f(a) - f(b) + f(0) vanishes for a function affine in the weight
            for f in [
                &|w: &StageWeights| stage2_objective(&c2, w).unwrap(),
                &|w: &StageWeights| stage3_objective(&c3, w).unwrap(),
                &|w: &StageWeights| diffusion_loss(c2.ctc, -c2.mss, w.lambda_si),
            ] as [&dyn Fn(&StageWeights) -> f64; 3]
            {
                let dev = f(&with(a + b)) - f(&with(a)) - f(&with(b)) + f(&with(0.0));
                worst = worst.max(dev.abs());
            }
        }
    }
    check(
        s2 == 5.5 && s3 == 5.0 && worst < 1e-12,
        format!("unit components: stage-2 {s2}, stage-3 {s3}; max additivity defect {worst:.1e}"),
    )
}

fn c10_end_to_end() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name);
    let run = |args: &[&str]| -> Result<(), String> {
        let out = duotok(args);
        if out.status.success() {
            Ok(())
        } else {
            Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
        }
    };

    let left = sine(440.0, 2.0, 24_000);
    let right = sine(660.0, 2.0, 24_000);
    duotok::io::write_wav(&p("mix.wav"), &[&left, &right], 24_000).map_err(|e| e.to_string())?;
    run(&["featurize", s(&p("mix.wav")), s(&p("mix.dtft"))])?;
    let mel = formats::decode_features(&formats::read_file(&p("mix.dtft")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let featurize_ok = mel.frames() == 1 + left.len() / 240 && mel.dim() == 128;

    let feats = p("features");
    std::fs::create_dir(&feats).map_err(|e| e.to_string())?;
    let manifest = write_toy_corpus(&feats, 7);
    let cfg = p("toy.conf");
    std::fs::write(
        &cfg,
        "seed = 7\ncodebook_size = 64\ncode_dim = 2\nstage3.peak_lr = 0.01\nstage3.warmup_steps = 10\n\
         stage3.cycle_steps = 1000\nstage3.train_steps = 500\n",
    )
    .map_err(|e| e.to_string())?;
    run(&[
        "train-vq",
        s(&feats),
        s(&manifest),
        "--out",
        s(&p("bank.dtcb")),
        "--log",
        s(&p("train.csv")),
        "--config",
        s(&cfg),
    ])?;
    let mut losses = Vec::new();
    let mut util = Vec::new();
    let mut rdr = csv::Reader::from_path(p("train.csv")).map_err(|e| e.to_string())?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        losses.push(rec[3].parse::<f64>().map_err(|e| e.to_string())?);
        util.push(rec[4].parse::<f64>().map_err(|e| e.to_string())?);
    }
    let ma = moving_average(&losses[..200], 20);
    let monotone = ma.windows(2).all(|w| w[1] < w[0]);
    let final_util = util[util.len() - 2..].iter().cloned().fold(f64::INFINITY, f64::min);
    let util_ok = final_util >= 8.0 / 64.0;

    let toks = p("tokens");
    std::fs::create_dir(&toks).map_err(|e| e.to_string())?;
    for i in 0..TOY_FILES_PER_ROUTE {
        run(&[
            "tokenize",
            s(&p("bank.dtcb")),
            s(&toks.join(format!("song{i}.dtok"))),
            "--vocal",
            s(&feats.join(format!("song{i}_vocal.dtft"))),
            "--accomp",
            s(&feats.join(format!("song{i}_accomp.dtft"))),
            "--config",
            s(&cfg),
        ])?;
    }
    run(&["eval-lm", s(&toks), "--baseline-bigram", "--out", s(&p("report.csv")), "--config", s(&cfg)])?;
    let mut h = std::collections::BTreeMap::new();
    let mut rdr = csv::Reader::from_path(p("report.csv")).map_err(|e| e.to_string())?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        h.insert(rec[0].to_string(), rec[1].parse::<f64>().map_err(|e| e.to_string())?);
    }
    let uniform = 64f64.ln();
    let bigram_ok = h["vocal"] < uniform && h["accomp"] < uniform;
    let secs = start.elapsed().as_secs_f64();
    check(
        featurize_ok && monotone && util_ok && bigram_ok && secs < 120.0,
        format!(
            "featurize frames ok: {featurize_ok}; 20-step MA strictly decreasing over 200 steps: {monotone} \
             ({:.3} -> {:.3}); utilization {final_util:.3} (need {:.3}); bigram H vocal {:.3} / accomp {:.3} \
             vs uniform {uniform:.3}; {secs:.1} s",
            ma[0],
            ma[ma.len() - 1],
            8.0 / 64.0,
            h["vocal"],
            h["accomp"]
        ),
    )
}

fn c11_serialization() -> Outcome {
    let mut r = rng::stream(111, 0);
    let f32v = |r: &mut StreamRng| (rng::normal(r) * 100.0) as f32 as f64;
    let mut failures = Vec::new();
    for i in 0..1000 {
        let (u, d) = (below(&mut r, 20), 1 + below(&mut r, 6));
        let f = FeatureSequence::new(Matrix::from_fn(u, d, |_, _| f32v(&mut r)), 25.0).unwrap();
        if formats::decode_features(&formats::encode_features(&f).unwrap()).ok().as_ref() != Some(&f) {
            failures.push(format!("DTFT #{i}"));
        }

        let len = below(&mut r, 50);
        let k = 2 + below(&mut r, 70_000) as u32;
        let mut tr = |route| {
            let idx = (0..len).map(|_| below(&mut r, k as usize) as u32).collect();
            TrackTokens::new(route, k, 25.0, idx).unwrap()
        };
        let t = if i % 3 == 0 {
            TokenFile::Single(tr(Route::Accompaniment))
        } else {
            TokenFile::Dual(align(tr(Route::Vocal), tr(Route::Accompaniment)).unwrap())
        };
        if formats::decode_tokens(&formats::encode_tokens(&t).unwrap()).ok().as_ref() != Some(&t) {
            failures.push(format!("DTOK #{i}"));
        }

        let (k, d) = (1 + below(&mut r, 10), 1 + below(&mut r, 4));
        let cb = Codebook::from_parts(
            Matrix::from_fn(k, d, |_, _| rng::normal(&mut r)),
            Matrix::from_fn(d, d, |_, _| rng::normal(&mut r)),
            0,
        )
        .unwrap();
        if formats::decode_codebook(&formats::encode_codebook(&cb).unwrap()).ok().as_ref() != Some(&cb) {
            failures.push(format!("DTCB #{i}"));
        }

        let lp = LogProbTable {
            stream: TableStream::from_code((i % 3) as u8).unwrap(),
            values: Matrix::from_fn(below(&mut r, 8), 1 + below(&mut r, 8), |_, _| f32v(&mut r)),
        };
        if formats::decode_logprobs(&formats::encode_logprobs(&lp).unwrap()).ok().as_ref() != Some(&lp) {
            failures.push(format!("DTLP #{i}"));
        }
    }

    let f = FeatureSequence::new(Matrix::zeros(3, 2), 25.0).unwrap();
    let t = TokenFile::Single(TrackTokens::new(Route::Vocal, 8, 25.0, vec![1, 2, 3]).unwrap());
    let cb = Codebook::random(1, 0, 3, 2).unwrap();
    let lp = LogProbTable {
        stream: TableStream::Accomp,
        values: Matrix::zeros(2, 2),
    };
    let blobs = [
        formats::encode_features(&f).unwrap(),
        formats::encode_tokens(&t).unwrap(),
        formats::encode_codebook(&cb).unwrap(),
        formats::encode_logprobs(&lp).unwrap(),
    ];
    let decode = |which: usize, b: &[u8]| -> Result<(), Error> {
        match which {
            0 => formats::decode_features(b).map(drop),
            1 => formats::decode_tokens(b).map(drop),
            2 => formats::decode_codebook(b).map(drop),
            _ => formats::decode_logprobs(b).map(drop),
        }
    };
    let mut rejects = 0;
    for (which, blob) in blobs.iter().enumerate() {
        let mut bad = blob.clone();
        bad[0] = b'Z';
        if matches!(decode(which, &bad), Err(Error::BadMagic { .. })) {
            rejects += 1;
        } else {
            failures.push(format!("format {which}: corrupted magic accepted"));
        }
        for cut in 4..blob.len() {
            if matches!(decode(which, &blob[..cut]), Err(Error::Truncated { .. })) {
                rejects += 1;
            } else {
                failures.push(format!("format {which}: {cut}-byte prefix not reported as truncated"));
            }
        }
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!("4 × 1000 round-trips exact; {rejects} corrupted/truncated inputs rejected")
        } else {
            failures.into_iter().take(5).collect::<Vec<_>>().join("; ")
        },
    )
}

fn c12_segmentation() -> Outcome {
    let mut r = rng::stream(112, 0);
    let mut clips = 0;
    let mut problems = Vec::new();
    for layout in 0..500 {
        let n = 1 + below(&mut r, 15);
        let mut spans = Vec::new();
        let mut t = 0.0;
        for _ in 0..n {
            t += 0.1 + 6.0 * rng::uniform(&mut r);
            let dur = 0.3 + if rng::uniform(&mut r) < 0.1 { 45.0 } else { 12.0 } * rng::uniform(&mut r);
            spans.push(LyricSpan::new(t, t + dur, "la"));
            t += dur;
        }
        let track = t + 4.0 * rng::uniform(&mut r);
        let seg = segment_by_lyrics(&spans, track).map_err(|e| e.to_string())?;
        for c in &seg.clips {
            clips += 1;
            let d = c.end - c.start;
            if !(MIN_CLIP_SECONDS - 1e-9..=MAX_CLIP_SECONDS + 1e-9).contains(&d) {
                problems.push(format!("layout {layout}: clip of {d:.3} s"));
            }
            for &i in &c.spans {
                if spans[i].start < c.start - 1e-9 || spans[i].end > c.end + 1e-9 {
                    problems.push(format!("layout {layout}: span {i} cut by clip"));
                }
            }
        }
        for (i, sp) in spans.iter().enumerate() {
            if sp.end - sp.start > MAX_CLIP_SECONDS && !seg.skipped.contains(&i) {
                problems.push(format!("layout {layout}: long span {i} not reported"));
            }
        }
    }
    let long = [LyricSpan::new(2.0, 8.0, "a"), LyricSpan::new(10.0, 50.0, "b"), LyricSpan::new(52.0, 60.0, "c")];
    let seg = segment_by_lyrics(&long, 70.0).map_err(|e| e.to_string())?;
    let forty_skipped = seg.skipped.contains(&1) && seg.clips.iter().all(|c| !c.spans.contains(&1));
    check(
        problems.is_empty() && forty_skipped,
        format!(
            "{clips} clips over 500 layouts, {} violations; 40 s span skipped and reported: {forty_skipped}{}",
            problems.len(),
            problems.first().map(|p| format!(" (first: {p})")).unwrap_or_default()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("CTC forward vs path enumeration", c01_ctc),
        ("SimVQ nearest neighbour vs exhaustive scan", c02_nearest_neighbour),
        ("W gradient vs central differences", c03_grad_w),
        ("PPL@1024 of a uniform predictor", c04_ppl_normalization),
        ("reported overall PPL from per-route PPL", c05_reported_overall_ppl),
        ("reported bitrates from rate and codebook sizes", c06_reported_bitrates),
        ("Gaussian replacement statistics", c07_gaussian_replacement),
        ("diffusion recovery and SI-SNR scale invariance", c08_diffusion),
        ("stage objective linearity and default weights", c09_linearity),
        ("end-to-end toy run", c10_end_to_end),
        ("binary format round-trips and rejection", c11_serialization),
        ("lyric segmentation", c12_segmentation),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

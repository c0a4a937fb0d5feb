//! Cross-module statistical invariants that need a realistic corpus.

use ctxparse::context::{
    estimate_ocp, fuse_context, global_vote, local_vote, majority_classes, OcpModel,
    OcpTrainItem,
};
use ctxparse::pipeline::analyze_image;
use ctxparse::superpixel::SlicParams;
use ctxparse::synth::{synth_generate, SynthConfig};

/// Labels every superpixel of the eval images by the argmax of the fused
/// context votes, casting votes from ground-truth classes, and returns
/// the pixel-weighted accuracy.
fn context_only_accuracy(ocp: &OcpModel<f64>, scenes: &[Scene]) -> f64 {
    let mut correct = 0u64;
    let mut total = 0u64;
    for s in &scenes[..] {
        for j in 0..s.analysis.spmap.count() {
            let Some(truth) = s.truths[j] else { continue };
            let local = local_vote(j, &s.sources, &s.analysis.spmap, ocp).unwrap();
            let global = global_vote(
                j,
                &s.sources,
                &s.analysis.spmap,
                &s.analysis.blocks,
                ocp,
            )
            .unwrap();
            let fused = fuse_context(&local, &global).unwrap();
            let w = s.analysis.spmap.pixel_count(j) as u64;
            total += w;
            if fused.argmax() == truth as usize {
                correct += w;
            }
        }
    }
    correct as f64 / total as f64
}

struct Scene {
    analysis: ctxparse::pipeline::ImageAnalysis,
    truths: Vec<Option<u8>>,
    sources: Vec<u8>,
}

/// Replacing the estimated co-occurrence tables with uniform ones must
/// strictly reduce context-only labeling accuracy (median over 3 seeds).
#[test]
fn informative_ocp_beats_uniform_tables() {
    let m = 4usize;
    let grid = 3usize;
    let slic = SlicParams {
        target_count: 120,
        ..SlicParams::default()
    };
    let mut diffs = Vec::new();
    for seed in 1..=3u64 {
        let ds = synth_generate(&SynthConfig {
            count: 24,
            seed,
            width: 48,
            height: 48,
            noise_sigma: 18.0,
            ..SynthConfig::default_for(m)
        })
        .unwrap();
        let scenes: Vec<Scene> = ds
            .items
            .iter()
            .map(|item| {
                let analysis = analyze_image(&item.image, &slic, grid).unwrap();
                let truths = majority_classes(&analysis.spmap, &item.labels, m).unwrap();
                // Ground-truth vote sources isolate the priors' own value.
                let sources: Vec<u8> = truths.iter().map(|t| t.unwrap_or(0)).collect();
                Scene {
                    analysis,
                    truths,
                    sources,
                }
            })
            .collect();
        let (fit, eval) = scenes.split_at(scenes.len() / 2);
        let items: Vec<OcpTrainItem> = fit
            .iter()
            .map(|s| OcpTrainItem {
                spmap: &s.analysis.spmap,
                blocks: &s.analysis.blocks,
                classes: &s.truths,
            })
            .collect();
        let estimated = estimate_ocp::<f64>(&items, m, grid, 1.0).unwrap();
        let uniform = OcpModel::<f64>::uniform(m, grid).unwrap();
        let with_priors = context_only_accuracy(&estimated, eval);
        let with_uniform = context_only_accuracy(&uniform, eval);
        diffs.push(with_priors - with_uniform);
    }
    let mut sorted = diffs.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert!(
        sorted[1] > 0.0,
        "uniform tables should strictly lose, diffs {diffs:?}"
    );
}

/// On a corpus whose top band is always class 0, the global vote for a
/// superpixel sitting in a top block concentrates more than uniform mass
/// on that class. Verified against a brute-force recomputation of the
/// vote sum.
#[test]
fn global_vote_favors_sky_in_top_blocks() {
    let m = 4usize;
    let grid = 3usize;
    let slic = SlicParams {
        target_count: 100,
        ..SlicParams::default()
    };
    let ds = synth_generate(&SynthConfig {
        count: 20,
        seed: 6,
        width: 48,
        height: 48,
        noise_sigma: 15.0,
        ..SynthConfig::default_for(m)
    })
    .unwrap();
    let scenes: Vec<(ctxparse::pipeline::ImageAnalysis, Vec<Option<u8>>)> = ds
        .items
        .iter()
        .map(|item| {
            let a = analyze_image(&item.image, &slic, grid).unwrap();
            let t = majority_classes(&a.spmap, &item.labels, m).unwrap();
            (a, t)
        })
        .collect();
    let (fit, eval) = scenes.split_at(scenes.len() / 2);
    let items: Vec<OcpTrainItem> = fit
        .iter()
        .map(|(a, t)| OcpTrainItem {
            spmap: &a.spmap,
            blocks: &a.blocks,
            classes: t,
        })
        .collect();
    let ocp = estimate_ocp::<f64>(&items, m, grid, 1.0).unwrap();

    let mut checked = 0usize;
    for (a, truths) in eval {
        let sources: Vec<u8> = truths.iter().map(|t| t.unwrap_or(0)).collect();
        for j in 0..a.spmap.count() {
            // Top row of blocks only.
            if (a.blocks.block_of(j) as usize) >= grid {
                continue;
            }
            let vote = global_vote(j, &sources, &a.spmap, &a.blocks, &ocp).unwrap();
            assert!(
                vote.as_slice()[0] > 1.0 / m as f64,
                "top-block superpixel {j} puts only {} on the top-band class",
                vote.as_slice()[0]
            );

            // Brute-force recomputation of the defining sum.
            let mut acc = vec![0.0f64; m];
            for k in 0..a.spmap.count() {
                if k == j {
                    continue;
                }
                let row = ocp.global_row(
                    a.blocks.block_of(k) as usize,
                    sources[k] as usize,
                    a.blocks.block_of(j) as usize,
                );
                for (c, slot) in acc.iter_mut().enumerate() {
                    *slot += a.spmap.pixel_count(k) as f64 * row[c];
                }
            }
            let total: f64 = acc.iter().sum();
            for (naive, got) in acc.iter().map(|v| v / total).zip(vote.as_slice()) {
                assert!((naive - got).abs() <= 1e-12);
            }
            checked += 1;
        }
    }
    assert!(checked > 50, "too few top-block superpixels exercised");
}

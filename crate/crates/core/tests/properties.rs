use candle_core::{DType, Device, Tensor};
use proptest::prelude::*;

use radcap_core::attention::{AttentionConfig, FeatureMap, MedicalModalityAttention};
use radcap_core::classifier::{pseudo_label_probs, ssl_loss, ModalityPrediction};
use radcap_core::data_io::{extract_weak_modality, ImageSample};
use radcap_core::evaluation::{
    clinical_score, relevance, structure_score, terminology_score, EvalItem, EvalWeights, EvaluationReport,
    Evaluator, HashingMultimodalEmbedder, Lexicon,
};
use radcap_core::nn::{Mode, ParamStore};
use radcap_core::prompt::PromptTemplates;
use radcap_core::question::{analyze, cosine_similarity, AnalyzerConfig, ConceptCategory, ConceptDictionary, BUILTIN_LEXICON};
use radcap_core::text::HashingEmbedder;

const WORDS: &[&str] = &[
    "the", "image", "shows", "a", "nodule", "in", "left", "right", "lung", "brain", "liver", "ct", "mri", "x-ray",
    "scan", "opacity", "mass", "normal", "findings", "impression", "3", "cm", "large", "is", "there", "effusion",
    "chest", "kidney", "which", "side", "abnormal", "?", ".", "lesion", "consolidation",
];

const QUESTIONS: &[&str] = &[
    "Which side of the lung is abnormal?",
    "Is this a CT scan?",
    "Does the brain show a mass?",
    "Where is the liver lesion?",
    "How large is the nodule in the right lung?",
    "Is the chest normal?",
];

fn sentence(max: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), 1..max).prop_map(|w| w.join(" "))
}

fn logits() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-4.0f64..4.0)
}

fn dictionary() -> ConceptDictionary {
    ConceptDictionary::from_tsv(BUILTIN_LEXICON, &HashingEmbedder::default()).unwrap()
}

fn flip_case(s: &str, mask: &[bool]) -> String {
    s.chars()
        .zip(mask.iter().cycle())
        .map(|(c, &up)| if up { c.to_ascii_uppercase() } else { c.to_ascii_lowercase() })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weak_label_ignores_case(q in sentence(10), a in sentence(4), mask in prop::collection::vec(any::<bool>(), 1..8)) {
        let base = extract_weak_modality(&q, &a);
        prop_assert_eq!(base, extract_weak_modality(&q, &a));
        prop_assert_eq!(base, extract_weak_modality(&flip_case(&q, &mask), &flip_case(&a, &mask)));
    }

    #[test]
    fn attention_preserves_shape(b in 1usize..3, c in 1usize..9, h in 1usize..7, w in 1usize..7, seed in 0u64..1000) {
        let mut store = ParamStore::new(DType::F32, seed);
        let block = MedicalModalityAttention::new(&mut store, "att", AttentionConfig::new(c)).unwrap();
        let x = Tensor::randn(0f32, 1.0, (b, c, h, w), &Device::Cpu).unwrap();
        let x = FeatureMap::new(x).unwrap();
        for mode in [Mode::Train, Mode::Eval] {
            let y = block.forward(&x, mode).unwrap();
            prop_assert_eq!(y.dims(), x.dims());
        }
    }

    #[test]
    fn masked_strong_logits_do_not_matter(
        labeled in prop::collection::vec((logits(), 0usize..3), 0..4),
        unlabeled in prop::collection::vec((logits(), logits()), 1..6),
        noise in logits(),
        tau in 0.4f64..0.99,
    ) {
        let weights = [1.0, 0.7, 1.3];
        let base = ssl_loss(&labeled, &unlabeled, &weights, tau, 1.0).unwrap();
        for i in 0..unlabeled.len() {
            let probs = ModalityPrediction::from_logits(unlabeled[i].0).confidence;
            if probs > tau {
                continue;
            }
            let mut perturbed = unlabeled.clone();
            perturbed[i].1 = noise;
            let other = ssl_loss(&labeled, &perturbed, &weights, tau, 1.0).unwrap();
            prop_assert_eq!(base.total, other.total);
        }
    }

    #[test]
    fn mask_rate_shrinks_with_tau(unlabeled in prop::collection::vec((logits(), logits()), 1..8), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let w = [1.0; 3];
        let a = ssl_loss(&[], &unlabeled, &w, lo, 1.0).unwrap();
        let b = ssl_loss(&[], &unlabeled, &w, hi, 1.0).unwrap();
        prop_assert!(a.mask_rate >= b.mask_rate);
    }

    #[test]
    fn prediction_survives_monotone_transform(l in logits(), k in 0.5f64..4.0, shift in -3.0f64..3.0) {
        let pred = ModalityPrediction::from_logits(l);
        let mut shifted = l;
        for v in &mut shifted {
            *v += shift;
        }
        prop_assert_eq!(ModalityPrediction::from_logits(shifted).modality, pred.modality);
        let probs = softmax(&l);
        let transformed: Vec<f64> = probs.iter().map(|p| p.powf(k).ln()).collect();
        let (index, _) = pseudo_label_probs(&transformed, f64::NEG_INFINITY).unwrap();
        prop_assert_eq!(index, pred.modality.index());
    }

    #[test]
    fn cosine_is_scale_invariant_and_bounded(
        q in prop::collection::vec(-5.0f64..5.0, 8),
        c in prop::collection::vec(-5.0f64..5.0, 8),
        alpha in 1e-3f64..1e3,
    ) {
        prop_assume!(q.iter().any(|v| v.abs() > 1e-6) && c.iter().any(|v| v.abs() > 1e-6));
        let s = cosine_similarity(&q, &c).unwrap();
        let scaled: Vec<f64> = c.iter().map(|v| v * alpha).collect();
        prop_assert!((cosine_similarity(&q, &scaled).unwrap() - s).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&s));
    }

    #[test]
    fn fused_prompt_contains_both_parts(a in "[^\n]{0,40}", b in ".{0,40}") {
        let t = PromptTemplates::default();
        let fused = t.fuse(&a, &b);
        prop_assert!(fused.contains(&a));
        prop_assert!(fused.contains(&b));
        prop_assert_eq!(t.split(&fused), Some((a.as_str(), b.as_str())));
    }

    #[test]
    fn weight_algebra_is_exact(
        si in -1.0f64..1.0, sq in -1.0f64..1.0, sm in 0.0f64..1.0, sc in 0.0f64..1.0, ss in 0.0f64..1.0,
        w in prop::array::uniform7(0.0f64..2.0),
    ) {
        let weights = EvalWeights { alpha1: w[0], alpha2: w[1], beta1: w[2], beta2: w[3], beta3: w[4], gamma1: w[5], gamma2: w[6] };
        let r = EvaluationReport::from_components(si, sq, sm, sc, ss, &weights, Default::default());
        let rel = w[0] * si + w[1] * sq;
        let qual = w[2] * sm + w[3] * sc + w[4] * ss;
        prop_assert_eq!(r.s_relevance, rel);
        prop_assert_eq!(r.s_quality, qual);
        prop_assert_eq!(r.s_final, w[5] * rel + w[6] * qual);
    }

    #[test]
    fn rubric_scores_stay_in_unit_range(caption in sentence(25), qi in 0usize..QUESTIONS.len()) {
        let dict = dictionary();
        let lexicon = Lexicon::builtin();
        let analysis = analyze(QUESTIONS[qi], &dict, &HashingEmbedder::default(), &AnalyzerConfig::default()).unwrap();
        for s in [
            terminology_score(&caption, &lexicon, 0.3).score,
            clinical_score(&caption, &analysis, &lexicon).score,
            structure_score(&caption).score,
        ] {
            prop_assert!((0.0..=1.0).contains(&s), "{s}");
        }
    }

    #[test]
    fn appending_focus_term_helps_question_similarity(caption in sentence(15), qi in 0usize..QUESTIONS.len()) {
        let dict = dictionary();
        let question = QUESTIONS[qi];
        let analysis = analyze(question, &dict, &HashingEmbedder::default(), &AnalyzerConfig::default()).unwrap();
        let provider = HashingMultimodalEmbedder::default();
        let img = ImageSample::from_fn(8, 8, 1, |y, x, _| ((y + 2 * x) % 5) as f32 / 5.0).unwrap();
        let w = EvalWeights::default();
        let (_, before, _) = relevance(&img, question, &caption, &provider, &w).unwrap();
        for category in ConceptCategory::ALL {
            for term in analysis.focus(category).iter().filter(|t| t.lexical) {
                let longer = format!("{caption} {}", term.term);
                let (_, after, _) = relevance(&img, question, &longer, &provider, &w).unwrap();
                prop_assert!(after >= before - 1e-12, "{term:?}: {before} -> {after}");
            }
        }
    }
}

fn softmax(l: &[f64; 3]) -> [f64; 3] {
    let m = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = l.map(|v| (v - m).exp());
    let z: f64 = e.iter().sum();
    e.map(|v| v / z)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn analysis_is_deterministic_and_sorted(qi in 0usize..QUESTIONS.len(), extra in sentence(6)) {
        let dict = dictionary();
        let q = format!("{} {extra}", QUESTIONS[qi]);
        let cfg = AnalyzerConfig::default();
        let a = analyze(&q, &dict, &HashingEmbedder::default(), &cfg).unwrap();
        prop_assert_eq!(&a, &analyze(&q, &dict, &HashingEmbedder::default(), &cfg).unwrap());
        for category in ConceptCategory::ALL {
            let terms = a.focus(category);
            for t in terms {
                prop_assert!((-1.0..=1.0).contains(&t.similarity));
            }
            for pair in terms.windows(2) {
                prop_assert!(pair[0].similarity >= pair[1].similarity);
                prop_assert!(pair[0].lexical || !pair[1].lexical);
            }
        }
    }

    #[test]
    fn batch_aggregate_ignores_order(captions in prop::collection::vec(sentence(12), 2..5), rot in 1usize..4) {
        let ev = Evaluator::stub(EvalWeights::default()).unwrap();
        let img = ImageSample::from_fn(8, 8, 3, |y, x, c| ((y * 3 + x + c) % 7) as f32 / 7.0).unwrap();
        let items: Vec<EvalItem> = captions
            .iter()
            .enumerate()
            .map(|(i, c)| EvalItem { record_id: format!("r{i}"), image: img.clone(), question: QUESTIONS[i % QUESTIONS.len()].into(), caption: c.clone() })
            .collect();
        let mut rotated = items.clone();
        rotated.rotate_left(rot % items.len());
        let a = ev.evaluate_batch(&items).unwrap();
        let b = ev.evaluate_batch(&rotated).unwrap();
        prop_assert_eq!(a.aggregate, b.aggregate);
        prop_assert_eq!(a.records, ev.evaluate_batch(&items).unwrap().records);
    }
}

//! Published results obtained with large pretrained recognition and
//! classification models. They are attached to report footers for context;
//! nothing in this crate is expected to reproduce them.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MethodValue {
    pub method: &'static str,
    pub value: f64,
}

const fn mv(method: &'static str, value: f64) -> MethodValue {
    MethodValue { method, value }
}

/// Mean cosine distance between original and anonymized faces.
pub const ANONYMITY_MEAN_DISTANCE: [MethodValue; 8] = [
    mv("original", 0.0000),
    mv("ours", 0.7145),
    mv("deepprivacy2", 0.8119),
    mv("ciagan", 0.9280),
    mv("pixelate-8", 0.8791),
    mv("pixelate-16", 0.6651),
    mv("blur-9", 0.0102),
    mv("blur-17", 0.0725),
];

/// Distance threshold above which re-identification is considered impractical.
pub const REIDENTIFICATION_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmotionDistance {
    pub dataset: &'static str,
    pub emotion: &'static str,
    pub ours: f64,
    pub deepprivacy2: f64,
    pub ciagan: f64,
}

const fn ed(dataset: &'static str, emotion: &'static str, ours: f64, deepprivacy2: f64, ciagan: f64) -> EmotionDistance {
    EmotionDistance {
        dataset,
        emotion,
        ours,
        deepprivacy2,
        ciagan,
    }
}

/// Mean class-probability distance per emotion.
pub const EMOTION_MEAN_DISTANCE: [EmotionDistance; 21] = [
    ed("affectnet", "neutral", 0.09, 0.17, 0.10),
    ed("affectnet", "anger", 0.14, 0.19, 0.15),
    ed("affectnet", "contempt", 0.09, 0.18, 0.10),
    ed("affectnet", "disgust", 0.10, 0.19, 0.12),
    ed("affectnet", "fear", 0.15, 0.12, 0.11),
    ed("affectnet", "happy", 0.13, 0.11, 0.10),
    ed("affectnet", "sadness", 0.10, 0.16, 0.09),
    ed("affectnet", "surprise", 0.10, 0.20, 0.10),
    ed("ck+", "anger", 0.14, 0.30, 0.18),
    ed("ck+", "contempt", 0.09, 0.25, 0.04),
    ed("ck+", "disgust", 0.21, 0.30, 0.23),
    ed("ck+", "fear", 0.06, 0.08, 0.06),
    ed("ck+", "happy", 0.07, 0.31, 0.19),
    ed("ck+", "sadness", 0.09, 0.14, 0.14),
    ed("ck+", "surprise", 0.08, 0.26, 0.05),
    ed("faces", "neutral", 0.11, 0.31, 0.12),
    ed("faces", "anger", 0.11, 0.36, 0.14),
    ed("faces", "disgust", 0.08, 0.18, 0.15),
    ed("faces", "fear", 0.02, 0.16, 0.07),
    ed("faces", "happy", 0.04, 0.17, 0.02),
    ed("faces", "sadness", 0.13, 0.31, 0.15),
];

/// Per-class F1 of emotion classifiers trained on original or anonymized
/// images, for `[original, ours, deepprivacy2, ciagan]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmotionF1 {
    pub dataset: &'static str,
    pub class: &'static str,
    pub f1: [f64; 4],
    pub support: u32,
}

pub const F1_METHODS: [&str; 4] = ["original", "ours", "deepprivacy2", "ciagan"];

const fn f1(dataset: &'static str, class: &'static str, f1: [f64; 4], support: u32) -> EmotionF1 {
    EmotionF1 {
        dataset,
        class,
        f1,
        support,
    }
}

pub const EMOTION_F1: [EmotionF1; 30] = [
    f1("affectnet", "neutral", [0.45, 0.14, 0.18, 0.32], 360),
    f1("affectnet", "anger", [0.58, 0.41, 0.23, 0.32], 346),
    f1("affectnet", "contempt", [0.56, 0.32, 0.25, 0.33], 354),
    f1("affectnet", "disgust", [0.56, 0.20, 0.29, 0.38], 357),
    f1("affectnet", "fear", [0.63, 0.44, 0.38, 0.29], 357),
    f1("affectnet", "happy", [0.53, 0.33, 0.33, 0.42], 362),
    f1("affectnet", "sadness", [0.72, 0.58, 0.45, 0.60], 352),
    f1("affectnet", "surprise", [0.60, 0.25, 0.22, 0.37], 337),
    f1("affectnet", "accuracy", [0.58, 0.37, 0.30, 0.38], 2825),
    f1("affectnet", "weighted avg", [0.58, 0.33, 0.29, 0.38], 2825),
    f1("ck+", "anger", [1.00, 0.00, 0.29, 0.27], 9),
    f1("ck+", "contempt", [0.86, 0.00, 0.00, 0.67], 3),
    f1("ck+", "disgust", [1.00, 0.69, 0.57, 0.61], 17),
    f1("ck+", "fear", [1.00, 0.86, 0.29, 0.50], 3),
    f1("ck+", "happy", [1.00, 0.92, 0.40, 0.62], 17),
    f1("ck+", "sadness", [1.00, 0.36, 0.00, 0.31], 3),
    f1("ck+", "surprise", [0.97, 0.82, 0.63, 0.91], 16),
    f1("ck+", "accuracy", [0.99, 0.69, 0.46, 0.62], 68),
    f1("ck+", "weighted avg", [0.99, 0.65, 0.44, 0.62], 68),
    f1("faces", "neutral", [0.97, 0.70, 0.66, 0.64], 36),
    f1("faces", "happy", [0.99, 0.92, 0.86, 0.99], 36),
    f1("faces", "sadness", [0.94, 0.71, 0.50, 0.66], 36),
    f1("faces", "fear", [1.00, 0.96, 0.74, 0.85], 34),
    f1("faces", "disgust", [0.94, 0.80, 0.63, 0.63], 36),
    f1("faces", "anger", [0.96, 0.74, 0.63, 0.69], 36),
    f1("faces", "accuracy", [0.97, 0.81, 0.67, 0.75], 214),
    f1("faces", "weighted avg", [0.97, 0.80, 0.67, 0.74], 214),
    f1("ck+", "macro avg", [0.97, 0.52, 0.31, 0.55], 68),
    f1("affectnet", "macro avg", [0.58, 0.33, 0.29, 0.38], 2825),
    f1("faces", "macro avg", [0.97, 0.81, 0.67, 0.74], 214),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraitRate {
    pub name: &'static str,
    pub rate: f64,
}

const fn tr(name: &'static str, rate: f64) -> TraitRate {
    TraitRate { name, rate }
}

/// Fraction of images whose predicted facial attribute disappears after
/// anonymization with the landmark-conditioned generator.
pub const TRAIT_REMOVAL_RATES: [TraitRate; 40] = [
    tr("Bald", 1.000000),
    tr("Gray Hair", 1.000000),
    tr("Double Chin", 0.998494),
    tr("Blurry", 0.996370),
    tr("Pale Skin", 0.996337),
    tr("Wearing Hat", 0.993348),
    tr("Wearing Necktie", 0.992764),
    tr("Mustache", 0.992661),
    tr("Chubby", 0.984813),
    tr("Goatee", 0.973311),
    tr("Wearing Necklace", 0.972358),
    tr("Eyeglasses", 0.966012),
    tr("Sideburns", 0.949251),
    tr("Big Nose", 0.899965),
    tr("Receding Hairline", 0.877510),
    tr("Bags Under Eyes", 0.852971),
    tr("Big Lips", 0.780942),
    tr("Wearing Earrings", 0.768467),
    tr("Black Hair", 0.729177),
    tr("Bushy Eyebrows", 0.721409),
    tr("5 o Clock Shadow", 0.636142),
    tr("Straight Hair", 0.630562),
    tr("Bangs", 0.620606),
    tr("Rosy Cheeks", 0.615530),
    tr("Blond Hair", 0.615213),
    tr("Pointy Nose", 0.516256),
    tr("Brown Hair", 0.480853),
    tr("Wavy Hair", 0.410118),
    tr("Narrow Eyes", 0.400334),
    tr("Male", 0.276199),
    tr("Arched Eyebrows", 0.097596),
    tr("Mouth Slightly Open", 0.089010),
    tr("High Cheekbones", 0.083279),
    tr("Heavy Makeup", 0.054131),
    tr("Wearing Lipstick", 0.048915),
    tr("Smiling", 0.046791),
    tr("Oval Face", 0.044784),
    tr("No Beard", 0.031004),
    tr("Attractive", 0.028488),
    tr("Young", 0.001595),
];

/// Reference values attached to emitted reports.
#[derive(Debug, Clone, Serialize)]
pub struct PublishedReference {
    pub note: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anonymity_mean_distance: Option<&'static [MethodValue]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emotion_mean_distance: Option<&'static [EmotionDistance]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emotion_classifier_f1: Option<&'static [EmotionF1]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trait_removal_rates: Option<&'static [TraitRate]>,
}

const NOTE: &str = "published values measured with pretrained face recognition and \
classification models; shown for context, not reproduced by this run";

impl PublishedReference {
    pub fn anonymity() -> Self {
        Self {
            note: NOTE,
            anonymity_mean_distance: Some(&ANONYMITY_MEAN_DISTANCE),
            emotion_mean_distance: None,
            emotion_classifier_f1: None,
            trait_removal_rates: None,
        }
    }

    pub fn emotion() -> Self {
        Self {
            note: NOTE,
            anonymity_mean_distance: None,
            emotion_mean_distance: Some(&EMOTION_MEAN_DISTANCE),
            emotion_classifier_f1: Some(&EMOTION_F1),
            trait_removal_rates: None,
        }
    }

    pub fn traits() -> Self {
        Self {
            note: NOTE,
            anonymity_mean_distance: None,
            emotion_mean_distance: None,
            emotion_classifier_f1: None,
            trait_removal_rates: Some(&TRAIT_REMOVAL_RATES),
        }
    }
}

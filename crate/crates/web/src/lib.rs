//! Browser front end: one synthetic benchmark, three interactive views.
//!
//! The `*_json` methods do the work and are usable natively; the exported
//! wrappers only turn their errors into JS exceptions.

use fsdc::{
    generate_synthetic, mean_marginal_skewness, project_2d, tukey_transform, Benchmark, Dataset, EpisodeSpec,
    PipelineConfig, SplitManifest, SweepParam, SyntheticSpec, TukeyParams,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub class: u32,
    pub role: &'static str,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct CurvePoint {
    pub lambda: f64,
    pub mean: f64,
    pub ci95: f64,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct ClassSkew {
    pub class: u32,
    pub before: f64,
    pub after: f64,
}

#[wasm_bindgen]
pub struct Demo {
    dataset: Dataset,
    split: SplitManifest,
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(err)
}

impl Demo {
    pub fn generate(seed: u64, skew_power: f64) -> Result<Demo, String> {
        let mut spec = SyntheticSpec::benchmark(seed);
        spec.skew_power = skew_power;
        let (dataset, split, _) = generate_synthetic(&spec).map_err(err)?;
        Ok(Demo { dataset, split })
    }

    fn config(lambda: f64, num_generated: usize, epochs: usize) -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.tukey.lambda = lambda;
        cfg.sampler.total_per_class = num_generated;
        cfg.optimizer.epochs = epochs;
        cfg
    }

    /// Support, query and generated features of one episode in a shared 2-D PCA frame.
    pub fn projection_json(&self, episode: u32, lambda: f64, num_generated: usize) -> Result<String, String> {
        let bench = Benchmark::new(&self.dataset, &self.split).map_err(err)?;
        let cfg = Demo::config(lambda, num_generated, 1);
        cfg.validate().map_err(err)?;
        let ep = bench.episode(&EpisodeSpec::default(), episode as u64).map_err(err)?;
        let prepared = bench.prepare(&ep, &cfg).map_err(err)?;
        let sets = [
            (&prepared.support, "support"),
            (&prepared.query, "query"),
            (&prepared.augmented, "generated"),
        ];
        let mut points = Vec::new();
        let mut roles = Vec::new();
        for (set, role) in sets {
            points.extend(set.iter().cloned());
            roles.extend(std::iter::repeat_n(role, set.len()));
        }
        let coords = project_2d(&points).map_err(err)?;
        let out: Vec<Point> = coords
            .into_iter()
            .zip(roles)
            .map(|((x, y, label), role)| Point {
                x,
                y,
                class: ep.classes[label],
                role,
            })
            .collect();
        json(&out)
    }

    /// Mean accuracy and CI for each λ on shared episodes.
    pub fn lambda_curve_json(&self, lambdas: &[f64], episodes: usize, num_generated: usize) -> Result<String, String> {
        let bench = Benchmark::new(&self.dataset, &self.split).map_err(err)?;
        let spec = EpisodeSpec {
            num_episodes: episodes,
            ..EpisodeSpec::default()
        };
        let base = Demo::config(0.5, num_generated, 100);
        let mut out = Vec::with_capacity(lambdas.len());
        for &lambda in lambdas {
            let cfg = SweepParam::Lambda.apply(&base, lambda).map_err(err)?;
            let r = bench.evaluate(&spec, &cfg).map_err(err)?;
            out.push(CurvePoint {
                lambda,
                mean: r.mean_accuracy,
                ci95: r.ci95_halfwidth,
            });
        }
        json(&out)
    }

    /// Mean per-dimension skewness of every novel class before and after the transform.
    pub fn skewness_json(&self, lambda: f64) -> Result<String, String> {
        let params = TukeyParams::with_lambda(lambda);
        params.validate().map_err(err)?;
        let mut out = Vec::new();
        for &class in &self.split.novel_classes {
            let raw = self.dataset.class_features(class).map_err(err)?;
            let moved = raw
                .iter()
                .map(|x| tukey_transform(x, &params))
                .collect::<Result<Vec<_>, _>>()
                .map_err(err)?;
            out.push(ClassSkew {
                class,
                before: mean_marginal_skewness(&raw).map_err(err)?,
                after: mean_marginal_skewness(&moved).map_err(err)?,
            });
        }
        json(&out)
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, skew_power: f64) -> Result<Demo, JsValue> {
        Demo::generate(seed as u64, skew_power).map_err(|e| JsValue::from_str(&e))
    }

    pub fn projection(&self, episode: u32, lambda: f64, num_generated: u32) -> Result<String, JsValue> {
        self.projection_json(episode, lambda, num_generated as usize)
            .map_err(|e| JsValue::from_str(&e))
    }

    pub fn lambda_curve(&self, lambdas: Vec<f64>, episodes: u32, num_generated: u32) -> Result<String, JsValue> {
        self.lambda_curve_json(&lambdas, episodes as usize, num_generated as usize)
            .map_err(|e| JsValue::from_str(&e))
    }

    pub fn skewness(&self, lambda: f64) -> Result<String, JsValue> {
        self.skewness_json(lambda).map_err(|e| JsValue::from_str(&e))
    }
}

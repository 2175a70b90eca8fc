use std::fs;
use std::path::{Path, PathBuf};

use super::{Score, Scorer, ScorerError};
use crate::clients::{ClientError, DetectorClient, T2IClient};

/// Text-to-image generation followed by detection: the real black box.
pub struct PipelineScorer {
    id: String,
    t2i: T2IClient,
    detector: DetectorClient,
    archive_dir: Option<PathBuf>,
}

impl PipelineScorer {
    pub fn new(t2i: T2IClient, detector: DetectorClient) -> Self {
        let id = format!("pipeline:{}", t2i.config().model_name);
        PipelineScorer {
            id,
            t2i,
            detector,
            archive_dir: None,
        }
    }

    /// Stores every generated image as `<dir>/<iteration>.png`, bytes as
    /// received.
    pub fn with_archive(mut self, dir: impl Into<PathBuf>) -> Self {
        self.archive_dir = Some(dir.into());
        self
    }

    pub fn archive_dir(&self) -> Option<&Path> {
        self.archive_dir.as_deref()
    }

    fn run(&self, iteration: Option<u64>, prompt: &str) -> Result<Score, ScorerError> {
        if prompt.is_empty() {
            return Err(ScorerError::EmptyPrompt);
        }
        let image = self.t2i.generate_image(prompt).map_err(ScorerError::Generation)?;
        if let (Some(dir), Some(i)) = (&self.archive_dir, iteration) {
            fs::create_dir_all(dir)
                .and_then(|_| fs::write(dir.join(format!("{i}.png")), &image))
                .map_err(ScorerError::Archive)?;
        }
        match self.detector.detect_image(&image) {
            Ok(p) => Score::new(p),
            Err(ClientError::OutOfRange(p)) => Err(ScorerError::OutOfRange(p)),
            Err(e) => Err(ScorerError::Detection(e)),
        }
    }
}

impl Scorer for PipelineScorer {
    fn id(&self) -> &str {
        &self.id
    }

    fn score(&self, prompt: &str) -> Result<Score, ScorerError> {
        self.run(None, prompt)
    }

    fn score_iteration(&self, iteration: u64, prompt: &str) -> Result<Score, ScorerError> {
        self.run(Some(iteration), prompt)
    }
}

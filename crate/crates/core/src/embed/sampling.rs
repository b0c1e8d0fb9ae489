use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

use super::{TripletExample, TripletSource};
use crate::error::{Error, Result};
use crate::media::FeatureVector;
use crate::rng;

/// Descriptors of one object track. The first patch is the track's initial
/// appearance and serves as anchor.
#[derive(Clone, Debug)]
pub struct LabeledTrack {
    pub class: usize,
    pub patches: Vec<FeatureVector>,
}

#[derive(Clone, Debug, Default)]
pub struct TrackDataset {
    pub tracks: Vec<LabeledTrack>,
}

impl TrackDataset {
    fn validate(&self) -> Result<()> {
        let mut classes: Vec<usize> = self.tracks.iter().map(|t| t.class).collect();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() < 2 {
            return Err(Error::Data("triplet sampling needs at least two classes".into()));
        }
        if let Some(t) = self.tracks.iter().find(|t| t.patches.len() < 2) {
            return Err(Error::Data(format!(
                "track of class {} has {} patch(es); at least two are required",
                t.class,
                t.patches.len()
            )));
        }
        Ok(())
    }
}

/// Endless seeded triplet stream over a dataset: a random track's initial
/// patch as anchor, another patch of the same track as positive, and a patch
/// of a track with a different class as negative.
pub struct TripletSampler {
    data: Arc<TrackDataset>,
    rng: ChaCha8Rng,
}

impl TripletSampler {
    pub fn new(data: Arc<TrackDataset>, seed: u64) -> Result<Self> {
        data.validate()?;
        Ok(TripletSampler {
            data,
            rng: rng::stream(seed, "triplets"),
        })
    }

    pub fn next_triplet(&mut self) -> TripletExample {
        let tracks = &self.data.tracks;
        let a = self.rng.random_range(0..tracks.len());
        let track = &tracks[a];
        let p = self.rng.random_range(1..track.patches.len());
        // rejection sampling terminates: validate() guarantees another class
        let negative_track = loop {
            let n = self.rng.random_range(0..tracks.len());
            if tracks[n].class != track.class {
                break &tracks[n];
            }
        };
        let q = self.rng.random_range(0..negative_track.patches.len());
        TripletExample {
            anchor: track.patches[0].clone(),
            positive: track.patches[p].clone(),
            negative: negative_track.patches[q].clone(),
        }
    }
}

impl TripletSource for TripletSampler {
    fn draw(&mut self, n: usize) -> Vec<TripletExample> {
        (0..n).map(|_| self.next_triplet()).collect()
    }
}

/// Draws `count` triplets with replacement.
pub fn sample_triplets(dataset: &TrackDataset, count: usize, seed: u64) -> Result<Vec<TripletExample>> {
    let mut s = TripletSampler::new(Arc::new(dataset.clone()), seed)?;
    Ok(s.draw(count))
}

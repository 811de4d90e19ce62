#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use pitwall::action::Action;
use pitwall::agent::{Checkpoint, NetShape, QNetwork, TrainingConfig};
use pitwall::rng::stream_rng;
use pitwall::sim::TrackConfig;
use pitwall::state::{calibrate_scaling, features, ScalingProfile, FEATURE_LEN};
use pitwall::xai::{DecisionTree, Node};

pub struct Model {
    pub net: Arc<QNetwork>,
    pub profile: Arc<ScalingProfile>,
    pub tree: Arc<DecisionTree>,
}

pub fn model() -> &'static Model {
    static M: OnceLock<Model> = OnceLock::new();
    M.get_or_init(|| {
        let profile = calibrate_scaling(&[TrackConfig::desk()], 20, 1).unwrap();
        let shape = NetShape {
            input: FEATURE_LEN,
            hidden: 8,
            dense: 8,
            q_scale: 10.0,
        };
        let mut net = QNetwork::init(shape, &mut stream_rng(4, &[]));
        // bias the NoPit head so the untrained agent keeps the car on track
        let n = net.params.len();
        net.params[n - 4] += 5.0;
        let leaf = |action: Action| {
            let mut counts = [0; Action::COUNT];
            counts[action.index()] = 1;
            Box::new(Node::Leaf { action, counts })
        };
        // pit for hards once past half distance
        let tree = DecisionTree::from_root(
            Node::Split {
                feature: features::PROGRESS,
                threshold: 0.5,
                left: leaf(Action::NoPit),
                right: leaf(Action::PitHard),
            },
            1,
        );
        Model {
            net: Arc::new(net),
            profile: Arc::new(profile),
            tree: Arc::new(tree),
        }
    })
}

pub fn checkpoint_json() -> String {
    let m = model();
    Checkpoint::new(
        (*m.net).clone(),
        (*m.profile).clone(),
        TrainingConfig::default(),
    )
    .to_json()
}

/// Desk track without lap noise or safety cars.
pub fn quiet_desk() -> TrackConfig {
    let mut c = TrackConfig::desk();
    c.lap_noise_sd = 0.0;
    c.sc_deploy_prob = 0.0;
    c
}

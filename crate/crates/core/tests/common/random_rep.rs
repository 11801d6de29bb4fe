//! Random catalog-valid representations.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use target_core::dsl::{
    Actor, ActorKind, ElementCatalog, Environment, Oracle, RoadNetwork, ScenarioRep, Subcomponent, EGO_VEHICLE,
};

fn pick(rng: &mut ChaCha8Rng, pool: &[String]) -> String {
    pool.choose(rng).unwrap().clone()
}

/// Up to `max` distinct tokens, in draw order.
fn pick_set(rng: &mut ChaCha8Rng, pool: &[String], max: usize) -> Vec<String> {
    let n = rng.gen_range(0..=max.min(pool.len()));
    pool.choose_multiple(rng, n).cloned().collect()
}

fn with_none(cat: &ElementCatalog, sub: Subcomponent) -> Vec<String> {
    let mut v = cat.candidates(sub);
    v.push("none".into());
    v
}

fn random_actor(rng: &mut ChaCha8Rng, cat: &ElementCatalog, kind: ActorKind) -> Actor {
    let mut refs = with_none(cat, Subcomponent::PositionReference);
    if kind == ActorKind::Ego {
        refs.retain(|r| r != EGO_VEHICLE);
    }
    Actor::new(
        kind,
        &pick(rng, cat.tokens(Subcomponent::ActorType)),
        &pick(rng, &with_none(cat, Subcomponent::Behavior)),
        &pick(rng, &refs),
        &pick(rng, &with_none(cat, Subcomponent::PositionRelation)),
    )
}

pub fn random_rep(rng: &mut ChaCha8Rng, cat: &ElementCatalog) -> ScenarioRep {
    let npcs = rng.gen_range(0..=3);
    ScenarioRep {
        environment: Environment {
            weather: pick(rng, &with_none(cat, Subcomponent::Weather)),
            time: pick(rng, &with_none(cat, Subcomponent::Time)),
        },
        road_network: RoadNetwork {
            road_type: pick(rng, &with_none(cat, Subcomponent::RoadType)),
            road_marker: pick(rng, &with_none(cat, Subcomponent::RoadMarker)),
            traffic_signs: pick_set(rng, cat.tokens(Subcomponent::TrafficSign), 3),
        },
        ego: random_actor(rng, cat, ActorKind::Ego),
        npc_actors: (0..npcs).map(|_| random_actor(rng, cat, ActorKind::Npc)).collect(),
        oracle: Oracle {
            longitudinal: pick_set(rng, cat.tokens(Subcomponent::LongitudinalOracle), 2),
            lateral: pick_set(rng, cat.tokens(Subcomponent::LateralOracle), 2),
        },
    }
}

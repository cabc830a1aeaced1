//! Rollout buffer, generalized advantage estimation and the clipped PPO
//! objective on a short rollout of the benchmark dynamics.
//!
//!     cargo run --example drl_mechanics -- [agents] [rollout]

use mfcg::agents::{gae, ppo_actor_loss, GaussianPolicy, RolloutBuffer, TransitionBatch};
use mfcg::net::Architecture;
use mfcg::rng::{normal, stream, Purpose};
use mfcg::{LqParams, MlpNet};

fn main() -> mfcg::Result<()> {
    let mut args = std::env::args().skip(1);
    let agents: usize = args.next().map_or(4, |s| s.parse().expect("agents"));
    let len: usize = args.next().map_or(8, |s| s.parse().expect("rollout length"));
    let p = LqParams::default();
    let policy = GaussianPolicy::init(16, &mut stream(0, Purpose::NetInit(0), 0, 0))?;
    let critic = MlpNet::init(Architecture::mlp(1, &[16], 1), &mut stream(0, Purpose::NetInit(1), 0, 0))?;

    let mut buf = RolloutBuffer::new(len)?;
    let mut xs: Vec<f64> = (0..agents as u64).map(|i| normal(0, Purpose::InitialState, 0, i)).collect();
    for n in 0..len as u64 {
        let mut b = TransitionBatch::default();
        for (i, x) in xs.iter_mut().enumerate() {
            let (a, logp) = policy.sample_with(*x, normal(0, Purpose::Action, n, i as u64))?;
            b.states.push(*x);
            b.actions.push(a);
            b.rewards.push(p.reward(*x, 0.0, 0.0, a));
            *x = p.env_step(*x, a, normal(0, Purpose::Environment, n, i as u64));
            b.next_states.push(*x);
            b.logprobs.push(logp);
        }
        buf.push(b)?;
    }

    let gamma = p.discount_factor();
    for lambda in [0.0, 0.95, 1.0] {
        let adv = gae(&buf, &critic, gamma, lambda)?;
        println!("lambda {lambda:.2}: advantages of agent 0 {:?}", adv.advantages.iter().map(|a| a[0]).collect::<Vec<_>>());
    }

    let adv = gae(&buf, &critic, gamma, 0.95)?;
    let first = &buf.batches()[0];
    // A perturbed policy so that some probability ratios leave the clip range.
    let mut moved = policy.clone();
    let params: Vec<f64> = policy.params().iter().enumerate().map(|(k, v)| v + 0.3 * normal(0, Purpose::Custom(1), 0, k as u64)).collect();
    moved.set_params(&params)?;
    for eps_clip in [0.0, 0.2, 1.0] {
        let (loss, grad) = ppo_actor_loss(&moved, &first.states, &first.actions, &first.logprobs, &adv.advantages[0], eps_clip, 0.01)?;
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        println!("eps_clip {eps_clip}: loss {loss:+.6}  |grad| {norm:.4e}");
    }
    Ok(())
}

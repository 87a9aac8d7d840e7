use std::sync::Mutex;

use rand::Rng;

use crate::error::{LearnError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f32>,
    pub action: Vec<f32>,
    pub reward: f32,
    pub next_state: Vec<f32>,
    pub done: bool,
}

/// Column-oriented minibatch, each field row-major `size x dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub states: Vec<f32>,
    pub actions: Vec<f32>,
    pub rewards: Vec<f32>,
    pub next_states: Vec<f32>,
    pub dones: Vec<f32>,
}

/// Fixed-capacity ring buffer; the oldest transition is overwritten once full.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    state_dim: usize,
    action_dim: usize,
    capacity: usize,
    len: usize,
    head: usize,
    states: Vec<f32>,
    actions: Vec<f32>,
    rewards: Vec<f32>,
    next_states: Vec<f32>,
    dones: Vec<f32>,
}

impl ReplayBuffer {
    pub fn new(state_dim: usize, action_dim: usize, capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            state_dim,
            action_dim,
            capacity,
            len: 0,
            head: 0,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_states: Vec::new(),
            dones: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn push(&mut self, t: &Transition) -> Result<()> {
        if t.state.len() != self.state_dim || t.next_state.len() != self.state_dim {
            return Err(LearnError::DimMismatch {
                context: "transition state",
                expected: self.state_dim,
                got: t.state.len().max(t.next_state.len()),
            });
        }
        if t.action.len() != self.action_dim {
            return Err(LearnError::DimMismatch {
                context: "transition action",
                expected: self.action_dim,
                got: t.action.len(),
            });
        }
        let done = if t.done { 1.0 } else { 0.0 };
        if self.len < self.capacity {
            self.states.extend_from_slice(&t.state);
            self.actions.extend_from_slice(&t.action);
            self.rewards.push(t.reward);
            self.next_states.extend_from_slice(&t.next_state);
            self.dones.push(done);
            self.len += 1;
        } else {
            let i = self.head;
            let (s, a) = (self.state_dim, self.action_dim);
            self.states[i * s..(i + 1) * s].copy_from_slice(&t.state);
            self.actions[i * a..(i + 1) * a].copy_from_slice(&t.action);
            self.rewards[i] = t.reward;
            self.next_states[i * s..(i + 1) * s].copy_from_slice(&t.next_state);
            self.dones[i] = done;
        }
        self.head = (self.head + 1) % self.capacity;
        Ok(())
    }

    pub fn get(&self, i: usize) -> Option<Transition> {
        if i >= self.len {
            return None;
        }
        let (s, a) = (self.state_dim, self.action_dim);
        Some(Transition {
            state: self.states[i * s..(i + 1) * s].to_vec(),
            action: self.actions[i * a..(i + 1) * a].to_vec(),
            reward: self.rewards[i],
            next_state: self.next_states[i * s..(i + 1) * s].to_vec(),
            done: self.dones[i] != 0.0,
        })
    }

    /// Uniform sampling with replacement.
    pub fn sample(&self, batch: usize, rng: &mut impl Rng) -> Result<Batch> {
        if self.len < batch || batch == 0 {
            return Err(LearnError::BufferTooSmall { len: self.len, batch });
        }
        let indices: Vec<usize> = (0..batch).map(|_| rng.random_range(0..self.len)).collect();
        Ok(self.gather(&indices))
    }

    pub fn gather(&self, indices: &[usize]) -> Batch {
        let (s, a) = (self.state_dim, self.action_dim);
        let mut b = Batch {
            size: indices.len(),
            states: Vec::with_capacity(indices.len() * s),
            actions: Vec::with_capacity(indices.len() * a),
            rewards: Vec::with_capacity(indices.len()),
            next_states: Vec::with_capacity(indices.len() * s),
            dones: Vec::with_capacity(indices.len()),
        };
        for &i in indices {
            b.states.extend_from_slice(&self.states[i * s..(i + 1) * s]);
            b.actions.extend_from_slice(&self.actions[i * a..(i + 1) * a]);
            b.rewards.push(self.rewards[i]);
            b.next_states.extend_from_slice(&self.next_states[i * s..(i + 1) * s]);
            b.dones.push(self.dones[i]);
        }
        b
    }

    /// Flattened storage in insertion-slot order, for snapshots.
    pub fn to_blocks(&self) -> (Vec<f32>, [usize; 2]) {
        let mut out = Vec::with_capacity(self.len * (2 * self.state_dim + self.action_dim + 2));
        out.extend_from_slice(&self.states);
        out.extend_from_slice(&self.actions);
        out.extend_from_slice(&self.rewards);
        out.extend_from_slice(&self.next_states);
        out.extend_from_slice(&self.dones);
        (out, [self.len, self.head])
    }

    pub fn from_blocks(
        state_dim: usize,
        action_dim: usize,
        capacity: usize,
        data: &[f32],
        [len, head]: [usize; 2],
    ) -> Result<Self> {
        let expected = len * (2 * state_dim + action_dim + 2);
        if data.len() != expected || len > capacity || head >= capacity.max(1) {
            return Err(LearnError::DimMismatch { context: "replay snapshot", expected, got: data.len() });
        }
        let (s, a) = (len * state_dim, len * action_dim);
        let mut at = 0;
        let mut take = |n: usize| {
            let v = data[at..at + n].to_vec();
            at += n;
            v
        };
        Ok(Self {
            state_dim,
            action_dim,
            capacity,
            len,
            head,
            states: take(s),
            actions: take(a),
            rewards: take(len),
            next_states: take(s),
            dones: take(len),
        })
    }
}

/// Replay buffer shared between rollout workers and a learner. Each call
/// holds the lock for its whole duration, so a batch append is never
/// interleaved with a sample.
#[derive(Debug)]
pub struct SharedReplayBuffer {
    inner: Mutex<ReplayBuffer>,
}

impl SharedReplayBuffer {
    pub fn new(buffer: ReplayBuffer) -> Self {
        Self { inner: Mutex::new(buffer) }
    }

    pub fn append(&self, transitions: &[Transition]) -> Result<()> {
        let mut guard = self.inner.lock().expect("replay lock poisoned");
        for t in transitions {
            guard.push(t)?;
        }
        Ok(())
    }

    pub fn sample(&self, batch: usize, rng: &mut impl Rng) -> Result<Batch> {
        self.inner.lock().expect("replay lock poisoned").sample(batch, rng)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("replay lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn into_inner(self) -> ReplayBuffer {
        self.inner.into_inner().expect("replay lock poisoned")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(v: f32) -> Transition {
        Transition { state: vec![v, v], action: vec![v], reward: v, next_state: vec![v + 1.0, v + 1.0], done: v > 2.0 }
    }

    #[test]
    fn ring_never_exceeds_capacity_and_overwrites_oldest() {
        let mut buf = ReplayBuffer::new(2, 1, 3);
        for i in 0..5 {
            buf.push(&tr(i as f32)).unwrap();
            assert!(buf.len() <= 3);
        }
        let rewards: Vec<f32> = (0..3).map(|i| buf.get(i).unwrap().reward).collect();
        assert_eq!(rewards, vec![3.0, 4.0, 2.0]);
        assert!(buf.get(0).unwrap().done);
    }

    #[test]
    fn sampling_requires_enough_transitions() {
        let mut buf = ReplayBuffer::new(2, 1, 10);
        buf.push(&tr(0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(buf.sample(2, &mut rng), Err(LearnError::BufferTooSmall { len: 1, batch: 2 })));
        buf.push(&tr(1.0)).unwrap();
        let b = buf.sample(2, &mut rng).unwrap();
        assert_eq!(b.size, 2);
        assert_eq!(b.states.len(), 4);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut buf = ReplayBuffer::new(3, 1, 10);
        assert!(buf.push(&tr(0.0)).is_err());
        assert!(buf.is_empty());
    }

    #[test]
    fn snapshot_blocks_round_trip() {
        let mut buf = ReplayBuffer::new(2, 1, 3);
        for i in 0..4 {
            buf.push(&tr(i as f32)).unwrap();
        }
        let (data, meta) = buf.to_blocks();
        let back = ReplayBuffer::from_blocks(2, 1, 3, &data, meta).unwrap();
        assert_eq!(back, buf);
    }

    #[test]
    fn shared_buffer_appends_atomically_from_threads() {
        let shared = SharedReplayBuffer::new(ReplayBuffer::new(2, 1, 1000));
        std::thread::scope(|s| {
            for w in 0..4 {
                let shared = &shared;
                s.spawn(move || {
                    let chunk: Vec<Transition> = (0..50).map(|i| tr((w * 100 + i) as f32)).collect();
                    shared.append(&chunk).unwrap();
                });
            }
        });
        let buf = shared.into_inner();
        assert_eq!(buf.len(), 200);
        // Each worker's 50 transitions stay contiguous.
        for start in (0..200).step_by(50) {
            let first = buf.get(start).unwrap().reward;
            for k in 0..50 {
                assert_eq!(buf.get(start + k).unwrap().reward, first + k as f32);
            }
        }
    }
}

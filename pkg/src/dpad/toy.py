"""Group-relative advantages and a desk-scale policy-optimization loop.

The synthetic environment replaces images with feature vectors so caption
similarities are exactly computable and the optimal policy is enumerable.
A state is a scene of boxed objects; an action is a joint (object choice,
caption-vocabulary choice) pair drawn from one tabular softmax row per
scene. Synthetic rollouts are well-formed by construction, so the format
term is the constant 3.0 and learning pressure comes from the geometric
and discriminative terms.

All randomness flows through counter-based Philox streams keyed by
(seed, state_id, step, member), so traces are bit-reproducible across
platforms and runs.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import GroupTooSmall, NonFiniteGradient, ZeroNorm
from .geometry import BBox, KeyPoint, Localization, geo_reward
from .semantics import DiscriminativeScores, variant_reward

ADVANTAGE_EPS = 1e-6

TOY_VARIANTS = ("binary", "difference", "scaled", "off")

FORMAT_SCORE = 3.0  # synthetic rollouts always pass all three checks


def _state_hash(state_id: str) -> int:
    digest = hashlib.blake2b(state_id.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def member_stream(seed: int, state_id: str, step: int, member: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, state_id, step, member).

    The Philox key carries (seed, state hash); (step, member) sit in the
    high counter words, so distinct members can never overlap streams.
    """
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, _state_hash(state_id)], dtype=np.uint64)
    counter = np.array([0, 0, step, member], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


class _MemberStreams:
    """Repositions one Philox generator across member streams.

    Produces draws bit-identical to fresh member_stream() construction
    (asserted in tests) at a fraction of the setup cost.
    """

    def __init__(self, seed: int, state_id: str):
        key = np.array(
            [seed & 0xFFFFFFFFFFFFFFFF, _state_hash(state_id)], dtype=np.uint64
        )
        self._bitgen = np.random.Philox(key=key)
        self.gen = np.random.Generator(self._bitgen)
        self._state = self._bitgen.state
        self._counter = self._state["state"]["counter"]

    def seek(self, step: int, member: int) -> np.random.Generator:
        self._counter[0] = 0
        self._counter[1] = 0
        self._counter[2] = step
        self._counter[3] = member
        self._state["buffer_pos"] = 4
        self._state["has_uint32"] = 0
        self._state["uinteger"] = 0
        self._bitgen.state = self._state
        return self.gen


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def group_advantages(rewards, eps: float = ADVANTAGE_EPS) -> np.ndarray:
    """(r - mean) / (population std + eps); exactly zero for constant groups."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.size < 2:
        raise GroupTooSmall(f"need at least 2 rewards, got shape {r.shape}")
    if not np.all(np.isfinite(r)):
        raise ValueError("rewards must be finite")
    if r.max() == r.min():
        return np.zeros_like(r)
    return (r - r.mean()) / (r.std() + eps)


@dataclass
class Scene:
    """One synthetic state: boxed objects with feature vectors.

    The object list is the distractors with the target inserted at
    gt_index; object_boxes follows that combined order. aoi_feature is the
    mean of all object features plus the scene's background vector.
    """

    target_feature: np.ndarray
    distractor_features: list[np.ndarray]
    object_boxes: list[BBox]
    gt_index: int
    aoi_feature: np.ndarray

    def __post_init__(self):
        n = len(self.distractor_features) + 1
        if not (0 <= self.gt_index < n):
            raise ValueError(f"gt_index {self.gt_index} out of range for {n} objects")
        if len(self.object_boxes) != n:
            raise ValueError(f"need {n} boxes, got {len(self.object_boxes)}")
        for vec in [self.target_feature, self.aoi_feature, *self.distractor_features]:
            if float(np.linalg.norm(vec)) == 0.0:
                raise ZeroNorm("scene features must have positive norm")

    @property
    def n_objects(self) -> int:
        return len(self.distractor_features) + 1

    def object_features(self) -> np.ndarray:
        feats = list(self.distractor_features)
        feats.insert(self.gt_index, self.target_feature)
        return np.stack(feats)

    def gt_localization(self) -> Localization:
        return box_localization(self.object_boxes[self.gt_index])

    def to_dict(self) -> dict:
        return {
            "target_feature": self.target_feature.tolist(),
            "distractor_features": [v.tolist() for v in self.distractor_features],
            "object_boxes": [list(b.as_tuple()) for b in self.object_boxes],
            "gt_index": self.gt_index,
            "aoi_feature": self.aoi_feature.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        return cls(
            target_feature=np.asarray(d["target_feature"], dtype=np.float64),
            distractor_features=[
                np.asarray(v, dtype=np.float64) for v in d["distractor_features"]
            ],
            object_boxes=[BBox(*b) for b in d["object_boxes"]],
            gt_index=int(d["gt_index"]),
            aoi_feature=np.asarray(d["aoi_feature"], dtype=np.float64),
        )


def box_localization(box: BBox) -> Localization:
    """Deterministic synthetic key points for a box: center and 3/4 point."""
    cx, cy = (box.x1 + box.x2) / 2.0, (box.y1 + box.y2) / 2.0
    qx, qy = (box.x1 + 3.0 * box.x2) / 4.0, (box.y1 + 3.0 * box.y2) / 4.0
    return Localization(bbox=box, p1=KeyPoint(cx, cy), p2=KeyPoint(qx, qy))


@dataclass
class ToyEnvironment:
    scenes: list[Scene]
    caption_vocabulary: np.ndarray  # (vocab_size, dim)
    noise_sigma: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if not self.scenes:
            raise ValueError("environment needs at least one scene")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        n_obj = {s.n_objects for s in self.scenes}
        if len(n_obj) != 1:
            raise ValueError(f"scenes disagree on object count: {sorted(n_obj)}")
        self.caption_vocabulary = np.asarray(self.caption_vocabulary, dtype=np.float64)
        self._geo_table: np.ndarray | None = None

    @property
    def n_objects(self) -> int:
        return self.scenes[0].n_objects

    @property
    def vocab_size(self) -> int:
        return self.caption_vocabulary.shape[0]

    @property
    def dim(self) -> int:
        return self.caption_vocabulary.shape[1]

    @property
    def n_actions(self) -> int:
        return self.n_objects * self.vocab_size

    def state_id(self, index: int) -> str:
        return f"scene-{index}"

    def split_action(self, action: int) -> tuple[int, int]:
        return divmod(action, self.vocab_size)

    def geo_score_table(self) -> np.ndarray:
        """(n_scenes, n_objects) geometric reward of choosing each object's box."""
        if self._geo_table is None:
            table = np.zeros((len(self.scenes), self.n_objects))
            for i, scene in enumerate(self.scenes):
                gt = scene.gt_localization()
                for o, box in enumerate(scene.object_boxes):
                    table[i, o] = geo_reward(box_localization(box), gt).score
            self._geo_table = table
        return self._geo_table

    def caption_scores(self, scene_index: int, captions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(s1, s2) cosine rows for a (G, dim) caption matrix against one scene."""
        scene = self.scenes[scene_index]
        norms = np.linalg.norm(captions, axis=1)
        if np.any(norms == 0.0):
            raise ZeroNorm("synthetic caption embedding collapsed to zero")
        t = scene.target_feature / np.linalg.norm(scene.target_feature)
        a = scene.aoi_feature / np.linalg.norm(scene.aoi_feature)
        s1 = (captions @ t) / norms
        s2 = (captions @ a) / norms
        return s1, s2

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "noise_sigma": self.noise_sigma,
            "rng_seed": self.rng_seed,
            "vocabulary": self.caption_vocabulary.tolist(),
            "scenes": [s.to_dict() for s in self.scenes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ToyEnvironment":
        return cls(
            scenes=[Scene.from_dict(s) for s in d["scenes"]],
            caption_vocabulary=np.asarray(d["vocabulary"], dtype=np.float64),
            noise_sigma=float(d.get("noise_sigma", 0.0)),
            rng_seed=int(d.get("rng_seed", 0)),
        )


def dpad_values(s1: np.ndarray, s2: np.ndarray, variant: str) -> np.ndarray:
    """Vectorized variant reward; "off" is the geometric-only baseline."""
    if variant == "binary":
        return (s1 > s2).astype(np.float64)
    if variant == "difference":
        return s1 - s2
    if variant == "scaled":
        return s1 * np.maximum(0.0, s1 - s2)
    if variant == "off":
        return np.zeros_like(s1)
    raise ValueError(f"unknown variant {variant!r}, expected one of {TOY_VARIANTS}")


@dataclass
class RolloutGroup:
    """G samples from one state, with everything the update step needs."""

    state_id: str
    state_index: int
    actions: np.ndarray         # (G,) flat action ids
    sampling_probs: np.ndarray  # (G,) probabilities at sampling time
    rewards: np.ndarray         # (G,)
    object_indices: np.ndarray
    vocab_indices: np.ndarray
    s1: np.ndarray
    s2: np.ndarray

    @property
    def group_size(self) -> int:
        return self.actions.shape[0]

    def deltas(self) -> np.ndarray:
        return np.maximum(0.0, self.s1 - self.s2)

    def member_payloads(self) -> list[dict]:
        return [
            {
                "action": int(self.actions[i]),
                "object_index": int(self.object_indices[i]),
                "vocab_index": int(self.vocab_indices[i]),
                "sampling_prob": float(self.sampling_probs[i]),
                "s1": float(self.s1[i]),
                "s2": float(self.s2[i]),
                "reward": float(self.rewards[i]),
            }
            for i in range(self.group_size)
        ]


@dataclass
class ToyPolicy:
    logits: np.ndarray  # (n_states, n_actions)
    learning_rate: float = 0.1
    clip_epsilon: float = 0.2

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64)
        if not np.all(np.isfinite(self.logits)):
            raise ValueError("logits must be finite")
        if self.learning_rate <= 0 or self.clip_epsilon <= 0:
            raise ValueError("learning_rate and clip_epsilon must be positive")

    def probs(self, state_index: int) -> np.ndarray:
        return _softmax(self.logits[state_index])

    def greedy_actions(self) -> np.ndarray:
        return np.argmax(self.logits, axis=1)

    def copy(self) -> "ToyPolicy":
        return ToyPolicy(self.logits.copy(), self.learning_rate, self.clip_epsilon)


def make_policy(env: ToyEnvironment, learning_rate: float = 0.1, clip_epsilon: float = 0.2) -> ToyPolicy:
    """Uniform policy: one all-zeros logit row per scene."""
    return ToyPolicy(
        logits=np.zeros((len(env.scenes), env.n_actions)),
        learning_rate=learning_rate,
        clip_epsilon=clip_epsilon,
    )


def sample_group(
    env: ToyEnvironment,
    policy: ToyPolicy,
    state_id: str,
    group_size: int,
    step: int = 0,
    variant: str = "binary",
) -> RolloutGroup:
    """Sample G joint actions and score the implied synthetic rollouts.

    Each member is a rollout whose bbox is the chosen object's box and
    whose caption embedding is the chosen vocabulary vector plus Gaussian
    noise of the environment's sigma.
    """
    if group_size < 2:
        raise GroupTooSmall(f"group size must be >= 2, got {group_size}")
    state_index = _state_index(env, state_id)
    probs = policy.probs(state_index)
    cum = np.cumsum(probs)
    dim = env.dim
    sigma = env.noise_sigma

    actions = np.empty(group_size, dtype=np.int64)
    noise = np.zeros((group_size, dim)) if sigma > 0 else None
    streams = _MemberStreams(env.rng_seed, state_id)
    for m in range(group_size):
        rng = streams.seek(step, m)
        u = rng.random()
        actions[m] = min(int(np.searchsorted(cum, u, side="right")), len(probs) - 1)
        if sigma > 0:
            noise[m] = rng.normal(0.0, sigma, size=dim)

    object_indices, vocab_indices = np.divmod(actions, env.vocab_size)
    captions = env.caption_vocabulary[vocab_indices]
    if noise is not None:
        captions = captions + noise
    s1, s2 = env.caption_scores(state_index, captions)

    geo = env.geo_score_table()[state_index, object_indices]
    rewards = FORMAT_SCORE + geo + dpad_values(s1, s2, variant)

    return RolloutGroup(
        state_id=state_id,
        state_index=state_index,
        actions=actions,
        sampling_probs=probs[actions],
        rewards=rewards,
        object_indices=object_indices,
        vocab_indices=vocab_indices,
        s1=s1,
        s2=s2,
    )


def _state_index(env: ToyEnvironment, state_id: str) -> int:
    if not state_id.startswith("scene-"):
        raise ValueError(f"unknown state id {state_id!r}")
    index = int(state_id.split("-", 1)[1])
    if not (0 <= index < len(env.scenes)):
        raise ValueError(f"state id {state_id!r} out of range")
    return index


def surrogate_objective(policy: ToyPolicy, group: RolloutGroup, advantages: np.ndarray) -> float:
    """Mean clipped-ratio surrogate, the quantity policy_update ascends."""
    probs = policy.probs(group.state_index)
    ratio = probs[group.actions] / group.sampling_probs
    clipped = np.clip(ratio, 1.0 - policy.clip_epsilon, 1.0 + policy.clip_epsilon)
    return float(np.mean(clipped * advantages))


def policy_update(policy: ToyPolicy, group: RolloutGroup, advantages: np.ndarray) -> ToyPolicy:
    """One ascent step on the clipped surrogate; returns a new policy.

    The ratio uses the sampling-time probabilities stored in the group, so
    members whose ratio has left the clip interval contribute no gradient.
    """
    advantages = np.asarray(advantages, dtype=np.float64)
    if advantages.shape != group.rewards.shape:
        raise ValueError("advantages must align with the group")
    eps = policy.clip_epsilon
    probs = policy.probs(group.state_index)
    ratio = probs[group.actions] / group.sampling_probs
    active = (ratio > 1.0 - eps) & (ratio < 1.0 + eps)

    grad = np.zeros_like(probs)
    G = group.group_size
    for i in np.flatnonzero(active):
        a = group.actions[i]
        coeff = advantages[i] / (G * group.sampling_probs[i])
        # d p[a] / d z = p[a] * (e_a - p)
        grad -= coeff * probs[a] * probs
        grad[a] += coeff * probs[a]
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradient("surrogate gradient is not finite")

    new_logits = policy.logits.copy()
    row = new_logits[group.state_index] + policy.learning_rate * grad
    # keep logits bounded; softmax is invariant to the shift
    row -= np.log(np.exp(row - row.max()).sum()) + row.max()
    new_logits[group.state_index] = row
    return ToyPolicy(new_logits, policy.learning_rate, policy.clip_epsilon)


# --- environment generators ---


def _env_stream(seed: int, tag: int, index: int = 0) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, 0xE0E0], dtype=np.uint64)
    counter = np.array([0, 0, tag, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def _orthonormal_frame(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    if count > dim:
        raise ValueError(f"cannot draw {count} orthonormal vectors in dim {dim}")
    m = rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(m)
    q = q * np.sign(np.diag(r))  # fix sign convention for determinism
    return q[:, :count].T


def _grid_boxes(n: int, size: float = 48.0) -> list[BBox]:
    boxes = []
    per_row = 4
    for i in range(n):
        r, c = divmod(i, per_row)
        x1, y1 = 8.0 + c * 60.0, 8.0 + r * 60.0
        boxes.append(BBox(x1, y1, x1 + size, y1 + size))
    return boxes


def make_discrimination_suite(
    n_scenes: int = 20,
    n_distractors: int = 4,
    dim: int = 16,
    noise_sigma: float = 0.0,
    seed: int = 0,
    ambiguous: bool = True,
) -> ToyEnvironment:
    """Seeded scene suite where captions, not boxes, disambiguate the target.

    The vocabulary is an orthonormal frame with one entry per object slot;
    every scene's objects carry the full vocabulary as features, with the
    target's entry rotating across scenes. Consequences: exactly one
    vocabulary vector is strictly closer to the target crop than to the
    whole-scene feature (the discriminative caption), and describing a
    distractor scores S1 = 0 < S2.

    With ambiguous=True, one distractor (the twin) sits in a box that
    overlaps the target box within every geometric threshold, so the
    geometric reward alone cannot separate target from twin.
    """
    vocab_size = n_distractors + 1
    if dim < vocab_size + 1:
        raise ValueError(f"dim must be at least {vocab_size + 1}")
    frame_rng = _env_stream(seed, tag=1)
    frame = _orthonormal_frame(dim, vocab_size + 1, frame_rng)
    vocab = frame[:vocab_size]
    background = frame[vocab_size]

    scenes = []
    for i in range(n_scenes):
        rng = _env_stream(seed, tag=2, index=i)
        k = i % vocab_size  # which vocabulary entry is the target
        features = [vocab[j] for j in range(vocab_size)]
        aoi = (np.sum(features, axis=0) + background) / (vocab_size + 1)

        gt_index = int(rng.integers(0, vocab_size))
        order = [j for j in range(vocab_size) if j != k]
        rng.shuffle(order)
        distractors = [vocab[j] for j in order]

        slots = _grid_boxes(vocab_size + 1)
        rng.shuffle(slots)
        boxes = slots[:vocab_size]
        if ambiguous:
            # twin: the first distractor shares the target's box region,
            # shifted by 2 px so both clear the IoU and L1 thresholds
            twin_pos = 0 if gt_index != 0 else 1
            t = boxes[gt_index]
            boxes[twin_pos] = BBox(t.x1 + 2.0, t.y1 + 2.0, t.x2 + 2.0, t.y2 + 2.0)

        scenes.append(
            Scene(
                target_feature=vocab[k],
                distractor_features=distractors,
                object_boxes=boxes,
                gt_index=gt_index,
                aoi_feature=aoi,
            )
        )
    return ToyEnvironment(
        scenes=scenes,
        caption_vocabulary=vocab,
        noise_sigma=noise_sigma,
        rng_seed=seed,
    )


# --- enumeration oracles and metrics ---


def expected_action_rewards(env: ToyEnvironment, scene_index: int, variant: str) -> np.ndarray:
    """Noiseless reward of every joint action in one scene."""
    scene = env.scenes[scene_index]
    geo = env.geo_score_table()[scene_index]
    s1, s2 = env.caption_scores(scene_index, env.caption_vocabulary)
    dpad = dpad_values(s1, s2, variant)
    return (FORMAT_SCORE + geo[:, None] + dpad[None, :]).reshape(-1)


def optimal_action_sets(env: ToyEnvironment, variant: str, tol: float = 1e-9) -> list[set[int]]:
    """Per scene, the argmax set of the noiseless reward over all actions."""
    sets = []
    for i in range(len(env.scenes)):
        r = expected_action_rewards(env, i, variant)
        sets.append(set(np.flatnonzero(r >= r.max() - tol).tolist()))
    return sets


def optimal_match_rate(env: ToyEnvironment, policy: ToyPolicy, variant: str) -> float:
    """Fraction of scenes whose greedy action is in the enumerated-optimal set."""
    optima = optimal_action_sets(env, variant)
    greedy = policy.greedy_actions()
    return float(np.mean([int(greedy[i]) in optima[i] for i in range(len(optima))]))


def target_selection_accuracy(env: ToyEnvironment, policy: ToyPolicy) -> float:
    """Fraction of scenes whose greedy action picks the ground-truth object."""
    greedy = policy.greedy_actions()
    hits = [
        env.split_action(int(greedy[i]))[0] == env.scenes[i].gt_index
        for i in range(len(env.scenes))
    ]
    return float(np.mean(hits))


def discriminative_vocab_sets(env: ToyEnvironment) -> list[set[int]]:
    """Per scene, the vocabulary entries with strictly positive noiseless delta."""
    sets = []
    for i in range(len(env.scenes)):
        s1, s2 = env.caption_scores(i, env.caption_vocabulary)
        sets.append(set(np.flatnonzero(s1 > s2).tolist()))
    return sets


def discrimination_accuracy(env: ToyEnvironment, policy: ToyPolicy) -> float:
    """Fraction of scenes whose greedy caption choice is discriminative."""
    good = discriminative_vocab_sets(env)
    greedy = policy.greedy_actions()
    hits = [
        env.split_action(int(greedy[i]))[1] in good[i] for i in range(len(env.scenes))
    ]
    return float(np.mean(hits))


# --- training loop ---


@dataclass(frozen=True)
class ToyTrainConfig:
    variant: str = "binary"
    steps: int = 500
    group_size: int = 8
    batch_size: int = 16
    learning_rate: float = 0.5
    clip_epsilon: float = 0.2
    seed: int = 0
    noise_sigma: float | None = None  # overrides the environment's value when set

    def __post_init__(self):
        if self.variant not in TOY_VARIANTS:
            raise ValueError(f"variant must be one of {TOY_VARIANTS}")
        if self.steps < 0 or self.group_size < 2 or self.batch_size < 1:
            raise ValueError("steps >= 0, group_size >= 2, batch_size >= 1 required")

    @classmethod
    def from_dict(cls, d: dict) -> "ToyTrainConfig":
        known = set(cls.__dataclass_fields__)  # type: ignore[attr-defined]
        unknown = set(d) - known - {"scenes_file"}
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass(frozen=True)
class TraceRow:
    step: int
    mean_reward: float
    accuracy: float
    mean_delta: float


@dataclass
class TrainingTrace:
    config: ToyTrainConfig
    rows: list[TraceRow] = field(default_factory=list)
    final_policy: ToyPolicy | None = None

    def to_csv_text(self) -> str:
        lines = ["step,mean_reward,accuracy,mean_delta"]
        for row in self.rows:
            lines.append(f"{row.step},{row.mean_reward!r},{row.accuracy!r},{row.mean_delta!r}")
        return "\n".join(lines) + "\n"


def _batch_indices(step: int, batch_size: int, n_scenes: int) -> list[int]:
    take = min(batch_size, n_scenes)
    start = (step - 1) * take % n_scenes
    return [(start + i) % n_scenes for i in range(take)]


def train(env: ToyEnvironment, cfg: ToyTrainConfig) -> TrainingTrace:
    """Optimize the tabular policy; the trace is fully determined by cfg.seed.

    Row 0 is an evaluation-only pass of the initial policy; rows 1..steps
    follow each optimization step.
    """
    if cfg.noise_sigma is not None and cfg.noise_sigma != env.noise_sigma:
        env = ToyEnvironment(
            scenes=env.scenes,
            caption_vocabulary=env.caption_vocabulary,
            noise_sigma=cfg.noise_sigma,
            rng_seed=env.rng_seed,
        )
    env = ToyEnvironment(
        scenes=env.scenes,
        caption_vocabulary=env.caption_vocabulary,
        noise_sigma=env.noise_sigma,
        rng_seed=cfg.seed,
    )
    policy = make_policy(env, cfg.learning_rate, cfg.clip_epsilon)
    trace = TrainingTrace(config=cfg)

    def record(step: int, groups: list[RolloutGroup]) -> None:
        rewards = np.concatenate([g.rewards for g in groups])
        deltas = np.concatenate([g.deltas() for g in groups])
        trace.rows.append(
            TraceRow(
                step=step,
                mean_reward=float(rewards.mean()),
                accuracy=target_selection_accuracy(env, policy),
                mean_delta=float(deltas.mean()),
            )
        )

    # initial evaluation, no update
    eval_groups = [
        sample_group(env, policy, env.state_id(i), cfg.group_size, step=0, variant=cfg.variant)
        for i in _batch_indices(1, cfg.batch_size, len(env.scenes))
    ]
    record(0, eval_groups)

    for step in range(1, cfg.steps + 1):
        groups = []
        for i in _batch_indices(step, cfg.batch_size, len(env.scenes)):
            group = sample_group(
                env, policy, env.state_id(i), cfg.group_size, step=step, variant=cfg.variant
            )
            advantages = group_advantages(group.rewards)
            policy = policy_update(policy, group, advantages)
            groups.append(group)
        record(step, groups)

    trace.final_policy = policy
    return trace

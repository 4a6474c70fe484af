"""Experiment pipelines and metrics.

An experiment run covers one or two environments (the manipulated one plus
the uniform contrast where applicable) across several seeds. Per seed the
training games are split into 11 equal subsets: one trains the literal
speaker, one the evaluation listener, and the rest feed the pragmatic
speaker's internal ensemble, so no two models ever see the same data.

Metrics follow the reference-game evaluation: communication accuracy against
the evaluation listener, the rate of redundant color mention when shape alone
suffices, per-feature uncertainty of the ensemble semantics, and how well the
word "circle" applies to circles of each color.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import language
from .agents import (
    EnsembleSemantics,
    EvalListener,
    LiteralSpeaker,
    ModelSemantics,
    RSASpeaker,
    load_literal_speaker,
    save_literal_speaker,
    train_literal_speaker,
)
from .dataset import DatasetManifest, generate_dataset, load_games, load_manifest
from .errors import ConfigurationError, InputError
from .games import ContextCondition, ReferenceGame
from .nn import EncoderConfig
from .scenes import Color, EnvironmentConfig, Shape
from .semantics import (
    Ensemble,
    TrainingHyperparams,
    load_model,
    save_model,
    train_semantic_function,
    write_training_log,
)
from .util import rng_from

ROLE_LITERAL = "literal-speaker"
ROLE_EVAL = "eval-listener"
N_SUBSETS = 11
MAX_ENSEMBLE = 9


def member_role(k: int) -> str:
    return f"rsa-ensemble-member-{k}"


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: int
    scale: float = 0.1
    seeds: tuple[int, ...] = (0, 1, 2)
    embed_dim: int = 64
    ensemble_size: int = 3
    epochs: int = 30
    cost_weight: float = 0.01
    image_side: int = 64
    semantic_lr: float = 0.01
    literal_lr: float = 0.001
    batch_size: int = 32
    validation_fraction: float = 0.1
    jobs: int = 1
    base_games: int = 75000

    def __post_init__(self):
        if self.experiment not in (1, 2, 3):
            raise ConfigurationError(f"unknown experiment id {self.experiment}")
        if not 0.0 < self.scale <= 1.0:
            raise ConfigurationError("scale must lie in (0, 1]")
        if not self.seeds:
            raise ConfigurationError("need at least one seed")
        if not 1 <= self.ensemble_size <= MAX_ENSEMBLE:
            raise ConfigurationError(f"ensemble size must be 1..{MAX_ENSEMBLE}")

    @property
    def total_games(self) -> int:
        return int(round(self.base_games * self.scale))

    @property
    def train_games(self) -> int:
        # ~73% of games train the agents, rounded down to a multiple of 11.
        raw = int(round(self.total_games * 11 / 15))
        return raw - raw % N_SUBSETS

    @property
    def eval_games(self) -> int:
        return self.total_games - self.train_games

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(image_side=self.image_side, embed_dim=self.embed_dim)


def environments_for(cfg: ExperimentConfig) -> dict[str, EnvironmentConfig]:
    uniform = EnvironmentConfig(image_side=cfg.image_side)
    if cfg.experiment == 1:
        return {"uniform": uniform}
    if cfg.experiment == 2:
        return {"typicality": EnvironmentConfig(distribution="typicality",
                                                image_side=cfg.image_side),
                "uniform": uniform}
    return {"low-salience": EnvironmentConfig(salience="low",
                                              image_side=cfg.image_side),
            "high-salience": uniform}


@dataclass
class SubsetPlan:
    subsets: list[list[int]]
    train_ids: list[int]
    eval_ids: list[int]

    def for_role(self, role: str) -> list[int]:
        if role == ROLE_LITERAL:
            return self.subsets[0]
        if role == ROLE_EVAL:
            return self.subsets[1]
        for k in range(1, MAX_ENSEMBLE + 1):
            if role == member_role(k):
                return self.subsets[1 + k]
        raise InputError(f"unknown role {role!r}")


def plan_subsets(manifest: DatasetManifest, seed: int,
                 train_count: int | None = None) -> SubsetPlan:
    """Permute the training ids with the given seed and slice into 11 equal
    subsets; the remaining games form the held-out evaluation split."""
    ids = [r.id for r in manifest.records]
    if train_count is None:
        raw = int(round(len(ids) * 11 / 15))
        train_count = raw - raw % N_SUBSETS
    if train_count % N_SUBSETS != 0:
        raise InputError(f"training size {train_count} not divisible by {N_SUBSETS}")
    if not 0 < train_count <= len(ids):
        raise InputError(f"training size {train_count} out of range")
    train_ids = ids[:train_count]
    eval_ids = ids[train_count:]
    perm = rng_from(seed, 400).permutation(train_count)
    size = train_count // N_SUBSETS
    subsets = [[train_ids[p] for p in perm[i * size:(i + 1) * size]]
               for i in range(N_SUBSETS)]
    return SubsetPlan(subsets=subsets, train_ids=train_ids, eval_ids=eval_ids)


# -- metrics ---------------------------------------------------------------


def produced_utterances(speaker, games: list[ReferenceGame]
                        ) -> list[language.Utterance]:
    return [speaker.speak_game(g) for g in games]


def accuracy_from(listener: EvalListener, games: list[ReferenceGame],
                  utterances: list[language.Utterance],
                  rng: np.random.Generator | None = None) -> float:
    """Fraction of games where the listener recovers the target; with an rng
    the choice is sampled from the listener distribution instead of argmax."""
    hits = 0
    for g, u in zip(games, utterances):
        refs = [listener.semantics.from_referent(r) for r in g.referents]
        if rng is None:
            hits += listener.choice(u, refs) == g.target_index
        else:
            p = listener.distribution(u, refs)
            hits += int(rng.choice(3, p=p)) == g.target_index
    return hits / len(games)


def communication_accuracy(speaker, listener: EvalListener,
                           games: list[ReferenceGame]) -> float:
    if not games:
        raise InputError("no games to evaluate")
    return accuracy_from(listener, games, produced_utterances(speaker, games))


def overmod_from(utterances: list[language.Utterance]) -> float:
    return sum(language.contains_color_word(u) for u in utterances) / len(utterances)


def overmodification_rate(speaker, games: list[ReferenceGame]) -> float:
    """Rate of color mention when shape alone identifies the target."""
    if any(g.condition is not ContextCondition.SHAPE_NEEDED for g in games):
        raise InputError("overmodification is defined over shape-needed games only")
    return overmod_from(produced_utterances(speaker, games))


def _feature_probe(word: str) -> language.Utterance:
    if word in language.COLOR_WORDS:
        return (language.WORD_TO_ID[word], language.NOUN_ID)
    if word in language.SHAPE_WORDS:
        return (language.WORD_TO_ID[word],)
    raise InputError(f"{word!r} is not a feature word")


def _referent_bears(word: str, spec) -> bool:
    if word in language.COLOR_WORDS:
        return spec.color.name.lower() == word
    return spec.shape.value == word


def feature_uncertainty(semantics, games: list[ReferenceGame], word: str) -> float:
    """Mean absolute deviation of the semantic value from the 0/1 truth value
    over every referent, probing colors as "<color> shape" and shapes bare."""
    probe = _feature_probe(word)
    refs = [semantics.from_referent(r) for g in games for r in g.referents]
    values = semantics.values_matrix([probe], refs)[:, 0]
    truth = np.array([_referent_bears(word, r.spec)
                      for g in games for r in g.referents], dtype=np.float64)
    return float(np.mean(np.abs(values - truth)))


def applicability_profile(semantics, shape_word: str,
                          games: list[ReferenceGame]) -> dict[str, float | None]:
    """Per color: mean semantic value of the bare shape word over referents
    of that shape and color; colors with no referents map to None."""
    if shape_word not in language.SHAPE_WORDS:
        raise InputError(f"{shape_word!r} is not a shape word")
    probe = (language.WORD_TO_ID[shape_word],)
    matching = [r for g in games for r in g.referents
                if r.spec.shape.value == shape_word]
    profile: dict[str, float | None] = {}
    for color in Color:
        cell = [r for r in matching if r.spec.color is color]
        if not cell:
            profile[color.name.lower()] = None
            continue
        values = semantics.values_matrix(
            [probe], [semantics.from_referent(r) for r in cell])[:, 0]
        profile[color.name.lower()] = float(values.mean())
    return profile


# -- pipeline ---------------------------------------------------------------


def _role_seed(seed: int, role: str) -> int:
    idx = {ROLE_LITERAL: 0, ROLE_EVAL: 1}.get(role)
    if idx is None:
        idx = 1 + int(role.rsplit("-", 1)[1])
    return seed * 64 + idx


def _train_role(args: tuple) -> tuple[str, float]:
    """Train one model and write its checkpoint (runs in a worker process)."""
    (data_dir, role, subset_ids, cfg_dict, seed, out_path, log_path) = args
    cfg = ExperimentConfig(**{**cfg_dict, "seeds": tuple(cfg_dict["seeds"])})
    manifest = load_manifest(data_dir)
    by_id = {r.id: r for r in manifest.records}
    games = load_games(data_dir, [by_id[i] for i in subset_ids])
    encoder_cfg = cfg.encoder_config()
    if role == ROLE_LITERAL:
        hyper = TrainingHyperparams(epochs=cfg.epochs, batch_size=cfg.batch_size,
                                    learning_rate=cfg.literal_lr,
                                    validation_fraction=cfg.validation_fraction,
                                    seed=_role_seed(seed, role))
        speaker, logs = train_literal_speaker(games, hyper, encoder_cfg)
        save_literal_speaker(out_path, speaker)
        metric = speaker.val_accuracy
    else:
        hyper = TrainingHyperparams(epochs=cfg.epochs, batch_size=cfg.batch_size,
                                    learning_rate=cfg.semantic_lr,
                                    validation_fraction=cfg.validation_fraction,
                                    seed=_role_seed(seed, role))
        model, logs = train_semantic_function(games, hyper, encoder_cfg)
        save_model(out_path, model, role)
        metric = model.val_loss
    write_training_log(log_path, logs)
    return role, float(metric)


def _ensure_dataset(env: EnvironmentConfig, num_games: int, seed: int,
                    out_dir: Path) -> DatasetManifest:
    """Generate the dataset unless a matching manifest already exists."""
    manifest_path = out_dir / "manifest.jsonl"
    if manifest_path.exists():
        manifest = load_manifest(out_dir)
        if (manifest.num_games == num_games and manifest.seed == seed
                and manifest.env == type(manifest.env)(**{**asdict(env), "seed": seed})):
            return manifest
    return generate_dataset(env, num_games, seed, out_dir)


def _row(cfg, seed, env_name, speaker, condition, metric, value, denominator):
    return {
        "experiment": cfg.experiment,
        "seed": seed,
        "environment": env_name,
        "speaker": speaker,
        "condition": condition,
        "metric": metric,
        "value": value,
        "denominator": denominator,
    }


def _evaluate_seed_env(cfg: ExperimentConfig, env_name: str, seed: int,
                       eval_games: list[ReferenceGame], literal: LiteralSpeaker,
                       ensemble: Ensemble, listener_model) -> list[dict]:
    listener = EvalListener(ModelSemantics(listener_model))
    rsa = RSASpeaker(semantics=EnsembleSemantics(ensemble),
                     cost_weight=cfg.cost_weight)
    rows = []
    speakers = {"literal": literal, "rsa": rsa}
    utterances = {name: produced_utterances(sp, eval_games)
                  for name, sp in speakers.items()}

    shape_needed = [i for i, g in enumerate(eval_games)
                    if g.condition is ContextCondition.SHAPE_NEEDED]
    circle_idx = [i for i in shape_needed
                  if eval_games[i].target.spec.shape is Shape.CIRCLE]
    red_idx = [i for i in circle_idx
               if eval_games[i].target.spec.color is Color.RED]
    nonred_idx = [i for i in circle_idx if i not in set(red_idx)]

    for name, sp in speakers.items():
        utts = utterances[name]
        rows.append(_row(cfg, seed, env_name, name, "all", "accuracy",
                         accuracy_from(listener, eval_games, utts),
                         len(eval_games)))
        rows.append(_row(cfg, seed, env_name, name, "all", "accuracy_sampled",
                         accuracy_from(listener, eval_games, utts,
                                       rng=rng_from(seed, 500, ord(name[0]))),
                         len(eval_games)))
        for cond in ContextCondition:
            idx = [i for i, g in enumerate(eval_games) if g.condition is cond]
            rows.append(_row(cfg, seed, env_name, name, cond.value, "accuracy",
                             accuracy_from(listener, [eval_games[i] for i in idx],
                                           [utts[i] for i in idx]), len(idx)))
        rows.append(_row(cfg, seed, env_name, name, "all", "exact_match",
                         sum(u == g.ground_truth
                             for u, g in zip(utts, eval_games)) / len(eval_games),
                         len(eval_games)))
        rows.append(_row(cfg, seed, env_name, name, "shape_needed",
                         "overmodification",
                         overmod_from([utts[i] for i in shape_needed]),
                         len(shape_needed)))
        if red_idx:
            rows.append(_row(cfg, seed, env_name, name, "shape_needed",
                             "overmodification_red_circle",
                             overmod_from([utts[i] for i in red_idx]),
                             len(red_idx)))
        if nonred_idx:
            rows.append(_row(cfg, seed, env_name, name, "shape_needed",
                             "overmodification_nonred_circle",
                             overmod_from([utts[i] for i in nonred_idx]),
                             len(nonred_idx)))

    internal = rsa.semantics
    color_unc = []
    for word in language.COLOR_WORDS + language.SHAPE_WORDS:
        unc = feature_uncertainty(internal, eval_games, word)
        if word in language.COLOR_WORDS:
            color_unc.append(unc)
        rows.append(_row(cfg, seed, env_name, "rsa_internal", "all",
                         f"uncertainty_{word}", unc, 3 * len(eval_games)))
    rows.append(_row(cfg, seed, env_name, "rsa_internal", "all",
                     "uncertainty_color_mean", float(np.mean(color_unc)),
                     3 * len(eval_games)))

    profile = applicability_profile(internal, "circle", eval_games)
    for color_name, value in profile.items():
        if value is not None:
            rows.append(_row(cfg, seed, env_name, "rsa_internal", "all",
                             f"applicability_circle_{color_name}", value, None))
    circles = [r for g in eval_games for r in g.referents
               if r.spec.shape is Shape.CIRCLE]
    red = [r for r in circles if r.spec.color is Color.RED]
    nonred = [r for r in circles if r.spec.color is not Color.RED]
    probe = (language.WORD_TO_ID["circle"],)
    for label, cell in (("red", red), ("nonred", nonred)):
        if cell:
            vals = internal.values_matrix(
                [probe], [internal.from_referent(r) for r in cell])[:, 0]
            rows.append(_row(cfg, seed, env_name, "rsa_internal", "all",
                             f"applicability_circle_pooled_{label}",
                             float(vals.mean()), len(cell)))
    return rows


def _run_seed_env(cfg: ExperimentConfig, env_name: str, env: EnvironmentConfig,
                  seed: int, workdir: Path, executor=None) -> list[dict]:
    data_dir = workdir / "data" / f"{env_name}-seed{seed}"
    manifest = _ensure_dataset(env, cfg.total_games, seed, data_dir)
    plan = plan_subsets(manifest, seed, cfg.train_games)
    model_dir = workdir / "models" / f"{env_name}-seed{seed}"
    model_dir.mkdir(parents=True, exist_ok=True)

    roles = [ROLE_EVAL] + [member_role(k) for k in range(1, cfg.ensemble_size + 1)]
    roles.append(ROLE_LITERAL)
    tasks = []
    for role in roles:
        out = model_dir / f"{role}.ckpt"
        log = model_dir / f"{role}.log.csv"
        tasks.append((str(data_dir), role, plan.for_role(role), asdict(cfg),
                      seed, str(out), str(log)))
    if executor is None:
        results = [_train_role(t) for t in tasks]
    else:
        results = list(executor.map(_train_role, tasks))

    selected = dict(results)
    listener_model, _ = load_model(model_dir / f"{ROLE_EVAL}.ckpt")
    members = [load_model(model_dir / f"{member_role(k)}.ckpt")[0]
               for k in range(1, cfg.ensemble_size + 1)]
    literal, _ = load_literal_speaker(model_dir / f"{ROLE_LITERAL}.ckpt")

    by_id = {r.id: r for r in manifest.records}
    eval_games = load_games(data_dir, [by_id[i] for i in plan.eval_ids])

    rows = _evaluate_seed_env(cfg, env_name, seed, eval_games, literal,
                              Ensemble(members), listener_model)
    for role, metric in sorted(selected.items()):
        name = ("selected_val_accuracy" if role == ROLE_LITERAL
                else "selected_val_loss")
        rows.append(_row(cfg, seed, env_name, role, "all", name, metric, None))
    return rows


@dataclass
class MetricsReport:
    config: dict
    rows: list[dict]
    aggregates: dict
    failures: list[dict] = field(default_factory=list)


def aggregate_rows(rows: list[dict]) -> dict:
    """Mean and 95% CI half-width across seeds for every metric key."""
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        key = (r["environment"], r["speaker"], r["condition"], r["metric"])
        groups.setdefault(key, []).append(r["value"])
    out: dict[str, dict] = {}
    for (env, speaker, cond, metric), values in sorted(groups.items()):
        arr = np.array(values, dtype=np.float64)
        entry = {"mean": float(arr.mean()), "n_seeds": len(values),
                 "per_seed": [float(v) for v in values]}
        if len(values) >= 2:
            entry["ci95_half"] = float(1.96 * arr.std(ddof=1) / np.sqrt(len(values)))
        out[f"{env}|{speaker}|{cond}|{metric}"] = entry
    return out


def run_experiment(cfg: ExperimentConfig, workdir: str | Path) -> MetricsReport:
    """Run every (environment, seed) cell, training all agents and computing
    all metrics; partial failures are recorded instead of aborting the rest."""
    from .reports import write_experiment_outputs

    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    rows: list[dict] = []
    failures: list[dict] = []
    executor = None
    if cfg.jobs > 1:
        executor = ProcessPoolExecutor(max_workers=cfg.jobs)
    try:
        for env_name, env in environments_for(cfg).items():
            for seed in cfg.seeds:
                try:
                    rows.extend(_run_seed_env(cfg, env_name, env, seed, workdir,
                                              executor))
                except Exception as exc:  # pragma: no cover - defensive
                    failures.append({"environment": env_name, "seed": seed,
                                     "error": f"{type(exc).__name__}: {exc}"})
    finally:
        if executor is not None:
            executor.shutdown()
    report = MetricsReport(config=asdict(cfg), rows=rows,
                           aggregates=aggregate_rows(rows), failures=failures)
    write_experiment_outputs(report, workdir)
    return report

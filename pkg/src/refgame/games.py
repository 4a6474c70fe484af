"""Reference games: three referents, a target, and a minimal true description.

Each game belongs to one of four context conditions that fix which feature(s)
a referring expression must mention to single out the target:

* color_needed      all referents share the target's shape, colors distinct
* shape_needed      all referents share the target's color, shapes distinct
* both_needed       one distractor matches in color, the other in shape
* either_sufficient distractors differ from the target in color and shape
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import language
from .errors import GenerationError
from .scenes import Color, EnvironmentConfig, SceneSpec, Shape, render, sample_scene


class ContextCondition(Enum):
    COLOR_NEEDED = "color_needed"
    SHAPE_NEEDED = "shape_needed"
    BOTH_NEEDED = "both_needed"
    EITHER_SUFFICIENT = "either_sufficient"


CONDITIONS = tuple(ContextCondition)


@dataclass
class Referent:
    spec: SceneSpec
    image: np.ndarray | None = None  # (side, side, 3) uint8 when rendered


@dataclass
class ReferenceGame:
    id: int
    referents: list[Referent]
    target_index: int
    condition: ContextCondition
    ground_truth: language.Utterance = field(default=())

    @property
    def target(self) -> Referent:
        return self.referents[self.target_index]

    def specs(self) -> list[SceneSpec]:
        return [r.spec for r in self.referents]

    def images(self) -> list[np.ndarray]:
        return [r.image for r in self.referents]


def _choice(rng: np.random.Generator, items: list):
    return items[rng.integers(len(items))]


def _sample_target_features(rng: np.random.Generator,
                            env: EnvironmentConfig) -> tuple[Color, Shape]:
    """Shape uniform; color uniform except under the typicality rule, which
    skews the target color for the typical shape (e.g. 90% of target circles
    come out red)."""
    shape = _choice(rng, list(Shape))
    if env.distribution == "typicality" and shape.value == env.typical_shape:
        typical = Color[env.typical_color.upper()]
        if rng.random() < env.typicality_rate:
            color = typical
        else:
            color = _choice(rng, [c for c in Color if c is not typical])
    else:
        color = _choice(rng, list(Color))
    return color, shape


def _distractor_features(rng: np.random.Generator, condition: ContextCondition,
                         tc: Color, ts: Shape) -> list[tuple[Color, Shape]]:
    other_colors = [c for c in Color if c is not tc]
    other_shapes = [s for s in Shape if s is not ts]
    if condition is ContextCondition.SHAPE_NEEDED:
        picks = rng.permutation(len(other_shapes))[:2]
        return [(tc, other_shapes[i]) for i in picks]
    if condition is ContextCondition.COLOR_NEEDED:
        picks = rng.permutation(len(other_colors))[:2]
        return [(other_colors[i], ts) for i in picks]
    if condition is ContextCondition.BOTH_NEEDED:
        return [(tc, _choice(rng, other_shapes)), (_choice(rng, other_colors), ts)]
    if condition is ContextCondition.EITHER_SUFFICIENT:
        first = (_choice(rng, other_colors), _choice(rng, other_shapes))
        while True:
            second = (_choice(rng, other_colors), _choice(rng, other_shapes))
            if second != first:
                return [first, second]
    raise GenerationError(f"unknown condition {condition}")


def sample_game(rng: np.random.Generator, condition: ContextCondition,
                env: EnvironmentConfig, game_id: int = 0,
                render_images: bool = True) -> ReferenceGame:
    tc, ts = _sample_target_features(rng, env)
    distractors = _distractor_features(rng, condition, tc, ts)
    target_index = int(rng.integers(3))
    features = distractors[:]
    features.insert(target_index, (tc, ts))
    referents = []
    for color, shape in features:
        spec = sample_scene(rng, env, color=color, shape=shape)
        referents.append(Referent(spec, render(spec, env) if render_images else None))
    game = ReferenceGame(id=game_id, referents=referents, target_index=target_index,
                         condition=condition)
    game.ground_truth = ground_truth_utterance(game)
    return game


def ground_truth_utterance(game: ReferenceGame) -> language.Utterance:
    """The shortest utterance that is true of the target alone.

    Ties at length one resolve to the bare shape word (a lone "shape" never
    uniquely refers); color-only information is expressed as color + "shape".
    """
    target = game.target.spec
    shape_word = language.WORD_TO_ID[target.shape.value]
    color_word = language.WORD_TO_ID[target.color.name.lower()]
    if game.condition is ContextCondition.SHAPE_NEEDED:
        utterance = (shape_word,)
    elif game.condition is ContextCondition.COLOR_NEEDED:
        utterance = (color_word, language.NOUN_ID)
    elif game.condition is ContextCondition.BOTH_NEEDED:
        utterance = (color_word, shape_word)
    elif game.condition is ContextCondition.EITHER_SUFFICIENT:
        utterance = (shape_word,)
    else:
        raise GenerationError(f"unknown condition {game.condition}")
    if not language.uniquely_identifies(utterance, game.specs(), game.target_index):
        raise GenerationError(f"game {game.id} violates its condition constraints")
    return utterance


def regenerate_images(game: ReferenceGame, env: EnvironmentConfig) -> ReferenceGame:
    """Re-render all referents from their specs (pure, bit-stable)."""
    refs = [replace(r, image=render(r.spec, env)) for r in game.referents]
    return ReferenceGame(id=game.id, referents=refs, target_index=game.target_index,
                         condition=game.condition, ground_truth=game.ground_truth)

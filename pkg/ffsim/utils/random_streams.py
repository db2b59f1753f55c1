"""
Counter-based random streams keyed on (master_seed, purpose, ...ids).

Each stream is a Philox generator seeded from a SeedSequence whose spawn key
is the tuple of identifiers, so a stream depends only on its key and never on
scheduling order or on how many other streams exist.
"""
from dataclasses import dataclass

import numpy as np

THETA_STREAM = 0
SELECTION_STREAM = 1
RESPONSE_STREAM = 2
FIXTURE_STREAM = 3


def derive_stream(master_seed: int, *key: int) -> np.random.Generator:
    sequence = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(part) for part in key))
    return np.random.Generator(np.random.Philox(sequence))


@dataclass
class StudentStreams:
    """The three independent draws a simulated student consumes."""

    theta: np.random.Generator
    selection: np.random.Generator
    response: np.random.Generator

    @classmethod
    def derive(cls, master_seed: int, condition_id: int, student_index: int) -> "StudentStreams":
        # theta depends on the student only so every condition sees the same learner;
        # selection/response are shared by the FF and no-FF arms of one selector.
        return cls(
            theta=derive_stream(master_seed, THETA_STREAM, student_index),
            selection=derive_stream(master_seed, SELECTION_STREAM, condition_id, student_index),
            response=derive_stream(master_seed, RESPONSE_STREAM, condition_id, student_index),
        )

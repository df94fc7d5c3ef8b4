from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
import pytest

from spikegrad.config import load_config
from spikegrad.data import build_source
from spikegrad.trainer import compare_gradients, train
from spikegrad.type_models import Algorithm

CONFIGS = Path(__file__).parents[2] / "configs"


def mean_final_accuracy(config_name: str, algorithm: Algorithm, seeds: int, **flags: object) -> float:
    accuracies = []
    for seed in range(seeds):
        config = load_config(CONFIGS / config_name, flags={"algorithm": algorithm.value, "seed": seed, **flags})
        result = train(config, build_source(config.dataset, config.seed))
        accuracies.append(result.summary.final_valid_accuracy)
    return float(np.mean(accuracies))


def first_hidden_cosines(algorithms: Sequence[Algorithm]) -> Dict[Algorithm, float]:
    config = load_config(CONFIGS / "fidelity_t_randman.cfg")
    results = compare_gradients(config, build_source(config.dataset, config.seed), None, algorithms)

    cosines: Dict[Algorithm, List[float]] = {algorithm: [] for algorithm in algorithms}
    for _, algorithm, report in results:
        cosines[algorithm].append(report.layers[0])
    return {algorithm: float(np.mean(values)) for algorithm, values in cosines.items()}


@pytest.mark.slow
class TestOutputLayerExactness:
    """
    OSTL and OTPE output-layer gradients equal BPTT along a whole training run.
    """

    def test_every_minibatch(self) -> None:
        config = load_config(CONFIGS / "output_exactness_t_randman.cfg")
        results = compare_gradients(
            config, build_source(config.dataset, config.seed), None, [Algorithm.OSTL, Algorithm.OTPE]
        )

        assert len(results) == 2 * config.schedule.minibatches
        for minibatch, algorithm, report in results:
            assert report.layers[-1] == pytest.approx(1.0, abs=1e-6), (minibatch, algorithm.value)


@pytest.mark.slow
class TestFidelityOrdering:
    """
    Temporal credit from R̂ and ẑ brings the first hidden layer closer to BPTT.
    """

    def test_first_hidden_layer(self) -> None:
        cosines = first_hidden_cosines([Algorithm.OSTL, Algorithm.OTTT, Algorithm.OTPE, Algorithm.APPROX_OTPE])
        baseline = max(cosines[Algorithm.OSTL], cosines[Algorithm.OTTT])

        assert cosines[Algorithm.OTPE] >= baseline + 0.15
        assert cosines[Algorithm.APPROX_OTPE] >= baseline + 0.15
        assert cosines[Algorithm.APPROX_OTPE] >= 0.5
        assert baseline <= 0.35


@pytest.mark.slow
class TestLearningOrdering:
    """
    Mean final validation accuracy over four seeds.
    """

    def test_t_randman(self) -> None:
        accuracy = {
            algorithm: mean_final_accuracy("learning_t_randman.cfg", algorithm, seeds=4)
            for algorithm in (Algorithm.BPTT, Algorithm.OTTT, Algorithm.OTPE)
        }
        assert accuracy[Algorithm.OTPE] >= accuracy[Algorithm.BPTT] - 0.03
        assert accuracy[Algorithm.OTPE] >= accuracy[Algorithm.OTTT] + 0.04

    def test_r_randman(self) -> None:
        accuracies = [
            mean_final_accuracy("learning_r_randman.cfg", algorithm, seeds=4)
            for algorithm in (
                Algorithm.BPTT,
                Algorithm.OSTL,
                Algorithm.OTTT,
                Algorithm.OTPE,
                Algorithm.APPROX_OTPE,
            )
        ]
        assert max(accuracies) - min(accuracies) <= 0.03


@pytest.mark.slow
class TestShdSubset:
    """
    OTPE over OTTT on the two-class SHD subset, when the converted file is present.
    """

    def test_otpe_beats_ottt(self) -> None:
        config = load_config(CONFIGS / "online_shd_subset.cfg")
        if not config.dataset.path.is_file():
            pytest.skip(f"{config.dataset.path} not converted")

        flags = {"mode": "offline"}
        otpe = mean_final_accuracy("online_shd_subset.cfg", Algorithm.OTPE, seeds=3, **flags)
        ottt = mean_final_accuracy("online_shd_subset.cfg", Algorithm.OTTT, seeds=3, **flags)
        assert otpe > ottt

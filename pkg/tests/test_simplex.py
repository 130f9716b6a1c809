"""Barycentric projection of 3-class probability mass."""
import math

import numpy as np
import pytest

from cmic.errors import InvalidInput
from cmic.simplex import project_logits, project_probabilities


class TestProjection:
    def test_vertices(self):
        probs = np.array([[1.0, 0.0, 0.0],
                          [0.0, 1.0, 0.0],
                          [0.0, 0.0, 1.0]])
        points, kept = project_probabilities(probs, (0, 1, 2))
        assert kept.all()
        np.testing.assert_allclose(points, [[0.0, 0.0], [1.0, 0.0],
                                            [0.5, math.sqrt(3) / 2]], atol=1e-15)

    def test_barycenter(self):
        points, _ = project_probabilities(np.full((1, 3), 1 / 3), (0, 1, 2))
        np.testing.assert_allclose(points[0], [0.5, math.sqrt(3) / 6], atol=1e-15)
        assert points[0, 1] == pytest.approx(0.288675, abs=1e-6)

    def test_renormalization_of_selected_columns(self):
        # row over 4 classes; classes (0, 2, 3) hold masses (0.2, 0.2, 0.1)
        probs = np.array([[0.2, 0.5, 0.2, 0.1]])
        points, kept = project_probabilities(probs, (0, 2, 3))
        assert kept.all()
        renorm = np.array([0.4, 0.4, 0.2])
        expected = renorm @ np.array([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]])
        np.testing.assert_allclose(points[0], expected, atol=1e-15)

    def test_zero_mass_row_skipped(self):
        probs = np.array([[0.0, 1.0, 0.0, 0.0],
                          [0.5, 0.0, 0.25, 0.25]])
        points, kept = project_probabilities(probs, (0, 2, 3))
        np.testing.assert_array_equal(kept, [False, True])
        assert points.shape == (1, 2)

    def test_logits_path_matches_three_way_softmax(self):
        rng = np.random.default_rng(4)
        logits = rng.normal(size=(10, 5))
        points = project_logits(logits, (1, 3, 4))
        sel = logits[:, [1, 3, 4]]
        e = np.exp(sel - sel.max(axis=1, keepdims=True))
        p = e / e.sum(axis=1, keepdims=True)
        expected = p @ np.array([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]])
        np.testing.assert_allclose(points, expected, atol=1e-12)

    def test_class_selection_validation(self):
        probs = np.full((1, 4), 0.25)
        with pytest.raises(InvalidInput):
            project_probabilities(probs, (0, 1))
        with pytest.raises(InvalidInput):
            project_probabilities(probs, (0, 1, 1))
        with pytest.raises(InvalidInput):
            project_probabilities(probs, (0, 1, 9))

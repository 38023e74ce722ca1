import numpy as np
import pytest

from collarforge import sequences
from collarforge.convergence import NetMethod, pairwise_distances, sample_net
from collarforge.errors import InputError
from collarforge.manifold_atlas import scale_metric
from collarforge.reports import SEQUENCE_COLUMNS
from collarforge.sequences import (
    SequenceFamily,
    push_net,
    run_sequence,
    sequence_member,
    window_manifold,
)

## --- Members ---


class TestSequenceMember:
    def test_balls(self):
        ball = sequence_member(SequenceFamily.EUCLIDEAN_BALLS, 3)
        assert ball.name.startswith("euclidean_ball")
        assert ball.has_boundary

    def test_shrinking_perturbation_scales_the_metric(self):
        member = sequence_member("shrinking_perturbation", 2)
        g = member.chart("stereo").metric_at(np.zeros(2))[0]
        np.testing.assert_allclose(g, 6.0 * np.eye(2), rtol=1e-12)

    def test_wide_balls_share_a_window(self):
        family = SequenceFamily.EUCLIDEAN_BALLS
        member = sequence_member(family, 8)
        assert window_manifold(family, 8, 5.0, member).name == (
            "euclidean_ball(radius=6)"
        )
        narrow = sequence_member(family, 6)
        assert window_manifold(family, 6, 5.0, narrow) is narrow

    def test_only_the_perturbation_shares_an_atlas(self):
        assert [f.shares_atlas for f in SequenceFamily] == [False, False, True]


def test_push_net(spherical_cap):
    net = sample_net(spherical_cap, 0.5, 5, method=NetMethod.POLAR)
    pushed = push_net(net, scale_metric(spherical_cap, 4.0))
    assert pushed.points == net.points
    np.testing.assert_allclose(
        pushed.distances, 2.0 * pairwise_distances(spherical_cap, net.points), rtol=1e-9
    )


## --- Runs ---


class TestRunSequence:
    def test_shrinking_perturbation_converges(self):
        report = run_sequence(
            "shrinking_perturbation", [1, 2, 4], 0.5, 1, count=5, extend=False
        )
        table = report.table
        assert table["index"].tolist() == [1, 2, 4]
        assert table["gh_epsilon"].iloc[-1] == 0.0
        assert table["ck_norm"].iloc[-1] == 0.0
        assert report.monotonicity["gh_epsilon"]["decreasing"]
        assert report.monotonicity["ck_norm"]["decreasing"]
        assert report.converging
        assert not report.limit_has_boundary

    def test_caps_keep_their_boundary(self):
        report = run_sequence("spherical_caps", [1, 2], 1.5, 0, count=5, extend=False)
        np.testing.assert_allclose(report.table["boundary_distance"], 1.0, atol=0.02)
        assert report.limit_has_boundary
        assert report.table["ck_norm"].isna().all()

    def test_balls_lose_their_boundary(self):
        report = run_sequence("euclidean_balls", [1, 2], 1.5, 0, count=5, extend=False)
        assert report.table["boundary_distance"].tolist() == pytest.approx(
            [1.0, 2.0], abs=0.02
        )
        assert not report.limit_has_boundary

    def test_balls_converge_in_a_wide_window(self):
        report = run_sequence(
            "euclidean_balls", range(1, 9), 5.0, 0, count=9, extend=False
        )
        epsilon = report.table["gh_epsilon"].tolist()
        assert epsilon[:4] == pytest.approx([4.0, 3.0, 2.0, 1.0], abs=0.1)
        assert 0.0 <= epsilon[4] < 0.1
        assert epsilon[5:] == [0.0, 0.0, 0.0]
        np.testing.assert_allclose(
            report.table["boundary_distance"], np.arange(1.0, 9.0), rtol=0.02
        )
        assert report.monotonicity["gh_epsilon"]["non_increasing"]
        assert report.converging
        assert not report.limit_has_boundary

    def test_caps_over_eight_members(self):
        report = run_sequence(
            "spherical_caps", range(1, 9), 1.5, 0, count=5, extend=False
        )
        np.testing.assert_allclose(report.table["boundary_distance"], 1.0, rtol=0.02)
        assert report.limit_has_boundary

    def test_perturbation_over_eight_members(self):
        report = run_sequence(
            "shrinking_perturbation", range(1, 9), 0.5, 1, count=5, extend=False
        )
        assert report.monotonicity["gh_epsilon"]["decreasing"]
        assert report.monotonicity["ck_norm"]["decreasing"]
        assert report.table["ck_norm"].iloc[-1] < 1e-3
        assert report.converging

    def test_seed_reaches_every_net(self, mocker):
        spy = mocker.spy(sequences, "sample_net")
        run_sequence("euclidean_balls", [1, 2], 1.5, 0, count=5, extend=False, seed=7)
        assert spy.call_count == 2
        assert all(call.kwargs["seed"] == 7 for call in spy.call_args_list)

    def test_report_outputs(self, tmp_path):
        report = run_sequence(
            "euclidean_balls",
            [1, 2],
            1.5,
            0,
            count=5,
            extend=False,
            settings={"seed": 0},
        )
        doc = report.to_document()
        assert doc["family"] == "euclidean_balls"
        assert doc["limit_has_boundary"] is False
        assert doc["settings"] == {"seed": 0}
        assert [row["index"] for row in doc["rows"]] == [1, 2]
        assert doc["rows"][0]["ck_norm"] is None

        path = tmp_path / "balls.csv"
        report.to_csv(path)
        assert path.read_text().splitlines()[0] == ",".join(SEQUENCE_COLUMNS)

    @pytest.mark.parametrize(
        "family, indices, message",
        [
            ("tori", [1], "unknown sequence family"),
            ("euclidean_balls", [], "at least one index"),
            ("euclidean_balls", [2, 1], "ascending"),
            ("euclidean_balls", [0, 1], ">= 1"),
        ],
    )
    def test_rejects(self, family, indices, message):
        with pytest.raises(InputError, match=message):
            run_sequence(family, indices, 1.0, 0)

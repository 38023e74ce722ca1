import json

import pytest

from collarforge.cli import (
    EXIT_FAILED,
    EXIT_INPUT,
    EXIT_OK,
    CommandOutcome,
    main,
    parse_indices,
    parse_params,
    run_command,
)
from collarforge.convergence import GHMode
from collarforge.errors import InputError

## --- Flag parsing ---


def test_parse_params():
    assert parse_params(["side=4", "n=3", "r2=0.5", "name=box", "r2=null"]) == {
        "side": 4,
        "n": 3,
        "r2": None,
        "name": "box",
    }


@pytest.mark.parametrize("token", ["side", "=4", "side=[1"])
def test_parse_params_rejects(token):
    with pytest.raises(InputError):
        parse_params([token])


@pytest.mark.parametrize(
    "text, expected",
    [("1..4", [1, 2, 3, 4]), (" 2 .. 2 ", [2]), ("1,2,8", [1, 2, 8]), ("5", [5])],
)
def test_parse_indices(text, expected):
    assert parse_indices(text) == expected


@pytest.mark.parametrize("text", ["4..1", "one,two", "1..", ""])
def test_parse_indices_rejects(text):
    with pytest.raises(InputError):
        parse_indices(text)


def test_outcome_exit_codes():
    with pytest.raises(ValueError, match="unknown exit code"):
        CommandOutcome(exit_code=3)


## --- Test Setup ---


@pytest.fixture
def small_box(tmp_path):
    path = tmp_path / "box.json"
    outcome = run_command(
        [
            "generate",
            "--family",
            "flat_box",
            "--params",
            "side=4",
            "resolution=4",
            "--out",
            str(path),
        ]
    )
    assert outcome.exit_code == EXIT_OK
    return path


@pytest.fixture
def slab(tmp_path):
    path = tmp_path / "slab.json"
    outcome = run_command(
        ["generate", "--family", "flat_slab", "--params", "resolution=8"]
        + ["--out", str(path)]
    )
    assert outcome.exit_code == EXIT_OK
    return path


def read_report(path):
    return json.loads(path.read_text())


## --- Commands ---


class TestGenerate:
    def test_writes_the_manifold(self, small_box):
        document = read_report(small_box)
        assert document["has_boundary"] is False
        assert [chart["id"] for chart in document["charts"]] == ["box"]

    def test_unknown_parameter(self, tmp_path, capsys):
        outcome = run_command(
            [
                "generate",
                "--family",
                "flat_box",
                "--params",
                "width=2",
                "--out",
                str(tmp_path / "x.json"),
            ]
        )
        assert outcome.exit_code == EXIT_INPUT
        assert "unknown parameters" in capsys.readouterr().out


class TestCertify:
    def test_box_passes(self, small_box, tmp_path, capsys):
        out = tmp_path / "reports" / "certificate.json"
        outcome = run_command(
            ["certify", str(small_box), "--c", "2", "--k", "0", "--out", str(out)]
        )
        assert outcome.exit_code == EXIT_OK
        assert outcome.report_path == out
        report = read_report(out)
        assert report["command"] == "certify"
        assert report["certificate"]["passed"] is True
        assert report["settings"]["seed"] == 0
        assert "passed" in capsys.readouterr().out

    def test_slab_fails_the_basepoint_clause(self, slab, tmp_path):
        out = tmp_path / "certificate.json"
        outcome = run_command(
            [
                "certify",
                str(slab),
                "--c",
                "1",
                "--k",
                "0",
                "--samples-per-axis",
                "3",
                "--out",
                str(out),
            ]
        )
        assert outcome.exit_code == EXIT_FAILED
        assert "failed (basepoint)" in outcome.summary
        assert read_report(out)["certificate"]["failed"] == ["basepoint"]

    def test_thin_cylinder_fails_boundary_injectivity(self, tmp_path):
        cylinder = tmp_path / "cylinder.json"
        generated = run_command(
            ["generate", "--family", "flat_cylinder", "--params", "radius=0.05"]
            + ["height=4", "resolution=8", "--out", str(cylinder)]
        )
        assert generated.exit_code == EXIT_OK
        out = tmp_path / "certificate.json"
        outcome = run_command(
            ["certify", str(cylinder), "--c", "1.25", "--k", "0"]
            + ["--samples-per-axis", "3", "--out", str(out)]
        )
        assert outcome.exit_code == EXIT_FAILED
        listed = outcome.summary.rsplit("failed (", 1)[1].rstrip(")").split(", ")
        assert "ii" in listed
        assert "ii" in read_report(out)["certificate"]["failed"]

    def test_malformed_manifold(self, tmp_path):
        broken = tmp_path / "broken.json"
        broken.write_text("{")
        outcome = run_command(
            ["certify", str(broken), "--c", "1", "--k", "0", "--out", "x.json"]
        )
        assert outcome.exit_code == EXIT_INPUT

    def test_missing_flag(self, small_box):
        outcome = run_command(["certify", str(small_box), "--c", "1"])
        assert outcome.exit_code == EXIT_INPUT


def test_unknown_command():
    outcome = run_command(["transmogrify"])
    assert outcome.exit_code == EXIT_INPUT
    assert outcome.summary.startswith("error:")


def test_seed_flag_is_recorded(small_box, tmp_path):
    out = tmp_path / "certificate.json"
    run_command(
        ["--seed", "11", "certify", str(small_box), "--c", "2", "--k", "0"]
        + ["--out", str(out)]
    )
    assert read_report(out)["settings"]["seed"] == 11


class TestNets:
    def test_net_and_ghdist(self, small_box, tmp_path):
        net_a, net_b = tmp_path / "a.json", tmp_path / "b.json"
        for out in (net_a, net_b):
            outcome = run_command(
                ["net", str(small_box), "--radius", "1", "--count", "5"]
                + ["--out", str(out)]
            )
            assert outcome.exit_code == EXIT_OK
        assert len(read_report(net_a)["points"]) == 5

        out = tmp_path / "gh.json"
        outcome = run_command(["ghdist", str(net_a), str(net_b), "--out", str(out)])
        assert outcome.exit_code == EXIT_OK
        assert outcome.summary.startswith("GH ε = 0")
        assert read_report(out)["gh"]["mode"] == "exact"

    def test_ghdist_needs_net_documents(self, small_box, tmp_path):
        outcome = run_command(
            ["ghdist", str(small_box), str(small_box), "--out", str(tmp_path / "x")]
        )
        assert outcome.exit_code == EXIT_INPUT


class TestExtension:
    def test_extend(self, slab, tmp_path):
        out = tmp_path / "extended.json"
        outcome = run_command(
            ["extend", str(slab), "--seeley-order", "2", "--out", str(out)]
        )
        assert outcome.exit_code == EXIT_OK
        report = read_report(out)
        assert report["provenance"]["seeley_order"] == 2
        assert report["settings"]["seeley_order"] == 2

    def test_extend_needs_a_boundary(self, small_box, tmp_path):
        outcome = run_command(
            ["extend", str(small_box), "--out", str(tmp_path / "x.json")]
        )
        assert outcome.exit_code == EXIT_INPUT

    def test_heightfn(self, slab, tmp_path):
        out = tmp_path / "height.json"
        outcome = run_command(["heightfn", str(slab), "--out", str(out)])
        assert outcome.exit_code == EXIT_OK
        assert read_report(out)["height"]["certificate"]["passed"] is True

    def test_align_identical_slabs(self, slab, tmp_path):
        out = tmp_path / "align.json"
        outcome = run_command(
            ["align", str(slab), str(slab), "--radius", "2", "--out", str(out)]
        )
        assert outcome.exit_code == EXIT_OK
        assert read_report(out)["alignment"]["longest_time"] == 0.0

    def test_align_needs_one_layout(self, slab, small_box, tmp_path):
        outcome = run_command(
            ["align", str(slab), str(small_box), "--radius", "1"]
            + ["--out", str(tmp_path / "x.json")]
        )
        assert outcome.exit_code == EXIT_INPUT
        assert "same charts" in outcome.summary


class TestSequence:
    @pytest.fixture
    def fake_run(self, mocker):
        run = mocker.patch("collarforge.cli.run_sequence")
        report = run.return_value
        report.converging = True
        report.limit_has_boundary = False
        report.family = "euclidean_balls"
        report.to_document.return_value = {"family": "euclidean_balls", "rows": []}
        return run

    def test_json_report(self, fake_run, tmp_path):
        out = tmp_path / "sequence.json"
        outcome = run_command(
            [
                "sequence",
                "--family",
                "euclidean_balls",
                "--indices",
                "1..3",
                "--radius",
                "1.5",
                "--k",
                "1",
                "--no-extend",
                "--out",
                str(out),
            ]
        )
        assert outcome.exit_code == EXIT_OK
        args, kwargs = fake_run.call_args
        assert args == ("euclidean_balls", [1, 2, 3], 1.5, 1)
        assert kwargs["extend"] is False
        assert kwargs["count"] == 9
        assert kwargs["mode"] == GHMode.EXACT
        assert kwargs["seed"] == 0
        assert read_report(out)["command"] == "sequence"

    def test_csv_report(self, fake_run, tmp_path):
        fake_run.return_value.converging = False
        out = tmp_path / "sequence.csv"
        outcome = run_command(
            [
                "sequence",
                "--family",
                "spherical_caps",
                "--indices",
                "1,2",
                "--radius",
                "1",
                "--k",
                "0",
                "--mode",
                "greedy",
                "--out",
                str(out),
            ]
        )
        assert outcome.exit_code == EXIT_FAILED
        fake_run.return_value.to_csv.assert_called_once_with(out)
        assert fake_run.call_args.kwargs["mode"] == GHMode.GREEDY


def test_main_returns_the_exit_code(small_box, tmp_path):
    out = tmp_path / "certificate.json"
    code = main(["certify", str(small_box), "--c", "2", "--k", "0", "--out", str(out)])
    assert code == EXIT_OK

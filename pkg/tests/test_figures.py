import pytest

from pushresp.decomposition import (
    BootstrapConfig,
    decompose,
    summarize,
    write_heatmap_csv,
    write_summary_csv,
)
from pushresp.errors import InvalidGrid, MissingArtifact
from pushresp.figures import FigureSpec, render_figure
from pushresp.lags import compute_moments_table
from pushresp.surface import BinGrid, accumulate_surface, write_surface_csv
from pushresp.synthetic import SyntheticSpec, generate

from test_decomposition import build_surface, mirror_cells


@pytest.fixture(scope="module")
def artifact_dir(tmp_path_factory):
    """A small end-to-end artifact set rendered from a null walk."""
    d = tmp_path_factory.mktemp("artifacts")
    series = generate(SyntheticSpec(kind="null_walk", n_events=60000,
                                    n_sessions=2, seed=4))
    rows = compute_moments_table(series, [1, 5, 20])
    surf = accumulate_surface(series, rows, BinGrid(n_min_support=50))
    write_surface_csv(surf, d / "surface.csv")
    pairs = decompose(surf)
    write_heatmap_csv(pairs, d / "heat.csv")
    write_summary_csv(summarize(pairs, BootstrapConfig(n_replicates=100, seed=1)),
                      d / "lags.csv")
    return d


def test_all_kinds_render_deterministically(artifact_dir, tmp_path):
    for kind, src in (
        ("surface_top", "surface"),
        ("surface_side", "surface"),
        ("dominance_heatmap", "heatmap"),
        ("magnitude_curve", "summary"),
        ("rho_curve", "summary"),
    ):
        inputs = {
            "surface": str(artifact_dir / "surface.csv"),
            "heatmap": str(artifact_dir / "heat.csv"),
            "summary": str(artifact_dir / "lags.csv"),
        }
        out1 = tmp_path / f"{kind}-1.svg"
        out2 = tmp_path / f"{kind}-2.svg"
        render_figure(FigureSpec(kind=kind, out=str(out1), **{src: inputs[src]}))
        render_figure(FigureSpec(kind=kind, out=str(out2), **{src: inputs[src]}))
        text = out1.read_text()
        assert text.startswith("<svg")
        assert text.rstrip().endswith("</svg>")
        assert out1.read_bytes() == out2.read_bytes()


def test_heatmap_single_pair_single_cell(tmp_path):
    surf = build_surface(mirror_cells(30, 400, 400, 0.2, -0.3))
    pairs = decompose(surf)
    heat = tmp_path / "heat.csv"
    write_heatmap_csv(pairs, heat)
    out = tmp_path / "heat.svg"
    render_figure(FigureSpec(kind="dominance_heatmap", out=str(out), heatmap=str(heat)))
    body = out.read_text()
    # background rect + exactly one data cell
    assert body.count("<rect") == 2


def test_rho_curve_has_three_polylines(artifact_dir, tmp_path):
    out = tmp_path / "rho.svg"
    render_figure(
        FigureSpec(kind="rho_curve", out=str(out),
                   summary=str(artifact_dir / "lags.csv"))
    )
    assert out.read_text().count("<polyline") == 3


def test_missing_artifact(tmp_path):
    with pytest.raises(MissingArtifact):
        render_figure(
            FigureSpec(kind="rho_curve", out=str(tmp_path / "x.svg"),
                       summary=str(tmp_path / "absent.csv"))
        )
    with pytest.raises(MissingArtifact):
        render_figure(FigureSpec(kind="surface_top", out=str(tmp_path / "y.svg")))


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(InvalidGrid):
        FigureSpec(kind="pie", out=str(tmp_path / "p.svg"))


def test_empty_csv_renders_blank_figure(tmp_path):
    src = tmp_path / "lags.csv"
    src.write_text("lag,rho,ci_low,ci_high,M,M_raw,n_supported_pairs,degenerate\n")
    out = tmp_path / "empty.svg"
    render_figure(FigureSpec(kind="rho_curve", out=str(out), summary=str(src)))
    assert "<polyline" not in out.read_text()

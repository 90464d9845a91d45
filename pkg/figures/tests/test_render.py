import json
import subprocess
import sys

import pytest

from riesz_figures import FigureSpec, SchemaError, read_scan_csv, render
from riesz_figures.cli import main

RATE_CSV = """# scenario=torus-lattice expected_slope=-0.5
N,s,d,fN,logOffset,shifted,additiveScale,value
32,0.5,1,-0.17677,0,-0.17677,0.17677,0.17677
64,0.5,1,-0.125,0,-0.125,0.125,0.125
128,0.5,1,-0.0883,0,-0.0883,0.0883,0.0883
256,0.5,1,-0.0625,0,-0.0625,0.0625,0.0625
"""

RATE_VERDICT = {
    "slope": -0.5003,
    "intercept": 1.0,
    "r2": 0.999,
    "expected_slope": -0.5,
    "pass": True,
}

GRONWALL_CSV = """# s=0.5
t,fN,logOffset,shifted,A1,gradUInf,muSup,additiveScale
0,0.003,0,0.003,0.5,19.7,1.25,0.03
0.1,-0.03,0,-0.03,-0.001,4.7,1.05,0.03
0.2,-0.033,0,-0.033,-1e-05,0.9,1.01,0.03
"""

RATIO_CSV = """# variant=sup_c
N,field,config,A1,rhs,ratio
256,mode1,iid,1.2,0.5,2.4
256,mode3,iid,0.6,0.5,1.2
512,mode1,iid,0.8,0.4,2.0
512,mode1,lattice,0.1,-0.2,nan
"""

SCALING_CSV = """# offset=0.25/N
N,eps,amplitude,kinetic,potential,zeta,curve
16,0.25,0.0884,0.0039,0.01,0,1
64,0.125,0.0442,0.00098,0.005,0,1
16,0.0625,0.3536,0.0625,0.1,0,2
64,0.015625,0.3536,0.0625,0.1,0,2
"""


@pytest.fixture
def rate_files(tmp_path):
    csv = tmp_path / "rate_scan.csv"
    csv.write_text(RATE_CSV)
    verdict = tmp_path / "rate_scan.verdict.json"
    verdict.write_text(json.dumps(RATE_VERDICT))
    return csv, verdict


class TestReading:
    def test_reads_comment_and_columns(self, rate_files):
        csv, _ = rate_files
        data = read_scan_csv(str(csv))
        assert list(data["N"]) == [32, 64, 128, 256]
        assert "value" in data

    def test_empty_file_rejected(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("")
        with pytest.raises(SchemaError):
            read_scan_csv(str(p))

    def test_header_only_rejected(self, tmp_path):
        p = tmp_path / "h.csv"
        p.write_text("N,value\n")
        with pytest.raises(SchemaError, match="no data rows"):
            read_scan_csv(str(p))


class TestRenderKinds:
    def test_rate_figure_with_annotation(self, rate_files, tmp_path):
        csv, verdict = rate_files
        out = tmp_path / "rate.svg"
        render(FigureSpec("rate", [str(csv)], str(out), verdict=str(verdict)))
        text = out.read_text()
        assert "slope=-0.50" in text
        assert "reference slope -0.50" in text

    def test_missing_column_named(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("N,other\n1,2\n")
        with pytest.raises(SchemaError, match="'value'"):
            render(FigureSpec("rate", [str(p)], str(tmp_path / "x.png")))

    def test_timeseries(self, tmp_path):
        p = tmp_path / "gronwall.csv"
        p.write_text(GRONWALL_CSV)
        out = tmp_path / "ts.png"
        render(FigureSpec("timeseries", [str(p)], str(out)))
        assert out.stat().st_size > 0

    def test_histogram_drops_nan(self, tmp_path):
        p = tmp_path / "ratio.csv"
        p.write_text(RATIO_CSV)
        out = tmp_path / "hist.png"
        render(FigureSpec("histogram", [str(p)], str(out)))
        assert out.stat().st_size > 0

    def test_scaling_two_curves(self, tmp_path):
        p = tmp_path / "super.csv"
        p.write_text(SCALING_CSV)
        out = tmp_path / "scaling.svg"
        render(FigureSpec("scaling", [str(p)], str(out)))
        text = out.read_text()
        assert "eps = N^(-1/2)" in text
        assert "eps N = 1" in text

    def test_unknown_kind(self, tmp_path):
        with pytest.raises(SchemaError):
            FigureSpec("pie", ["x.csv"], str(tmp_path / "x.png"))


class TestDeterminism:
    @pytest.mark.parametrize("ext", ["png", "svg"])
    def test_byte_identical(self, rate_files, tmp_path, ext):
        csv, verdict = rate_files
        a = tmp_path / f"a.{ext}"
        b = tmp_path / f"b.{ext}"
        render(FigureSpec("rate", [str(csv)], str(a), verdict=str(verdict)))
        render(FigureSpec("rate", [str(csv)], str(b), verdict=str(verdict)))
        assert a.read_bytes() == b.read_bytes()


class TestCli:
    def test_cli_render(self, rate_files, tmp_path):
        csv, verdict = rate_files
        out = tmp_path / "fig.png"
        code = main(["rate", "--in", str(csv), "--verdict", str(verdict), "--out", str(out)])
        assert code == 0
        assert out.exists()

    def test_cli_empty_csv_nonzero_exit(self, tmp_path, capsys):
        p = tmp_path / "empty.csv"
        p.write_text("")
        code = main(["rate", "--in", str(p), "--out", str(tmp_path / "x.png")])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_entry_module(self, rate_files, tmp_path):
        csv, verdict = rate_files
        out = tmp_path / "fig2.png"
        proc = subprocess.run(
            [sys.executable, "-m", "riesz_figures.cli", "rate", "--in", str(csv),
             "--verdict", str(verdict), "--out", str(out)],
            capture_output=True, text=True, timeout=120,
        )
        assert proc.returncode == 0 and out.exists()


class TestPrimarySchemas:
    """Render every schema the primary component's scans emit."""

    def test_all_four_schemas(self, tmp_path, rate_files):
        csv, verdict = rate_files
        files = {
            "rate": csv,
            "timeseries": tmp_path / "g.csv",
            "histogram": tmp_path / "r.csv",
            "scaling": tmp_path / "s.csv",
        }
        files["timeseries"].write_text(GRONWALL_CSV)
        files["histogram"].write_text(RATIO_CSV)
        files["scaling"].write_text(SCALING_CSV)
        for kind, path in files.items():
            out = tmp_path / f"{kind}.png"
            render(FigureSpec(kind, [str(path)], str(out)))
            assert out.stat().st_size > 0

from pimsim.plots import plot_sweep


def test_plot_renders_png(tmp_path):
    rows = [{"axis": "scopes", "point": p, "model": m, "total_cycles": c, "total_cycles_norm": c / n}
            for p, n in ((4, 100), (16, 200)) for m, c in (("naive", n), ("scope", n * 1.5))]
    p = plot_sweep(rows, tmp_path / "sub" / "f.png", "t")
    assert p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_plot_skips_missing_norm(tmp_path):
    rows = [{"axis": "llc", "point": "2MiB", "model": "scope", "total_cycles": 5, "total_cycles_norm": None}]
    assert plot_sweep(rows, tmp_path / "g.png").exists()

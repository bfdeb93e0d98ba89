import numpy as np
import pytest

from etchmap.cli import main
from etchmap.config import load_config
from etchmap.errors import UsageError
from etchmap.matrixio import read_field, read_manifest, read_matrix, read_spectrum_table

BASE_CFG = """
[beam]
family = gaussian
sigma = 2.0

[geometry]
half_width = 20
spacing = 0.5

[solver]
mode = {mode}
{solver_extra}

[io]
output_dir = out
seed = 4242

[synth]
modes = 6
noise = {noise}
"""


def write_cfg(tmp_path, mode="truncated-fit", solver_extra="n_tr = 6",
              noise="0.0", body=None, name="run.cfg"):
    path = tmp_path / name
    path.write_text(body if body is not None
                    else BASE_CFG.format(mode=mode, solver_extra=solver_extra,
                                         noise=noise))
    return path


class TestConfig:
    def test_loads_minimal(self, tmp_path):
        cfg = load_config(write_cfg(tmp_path))
        assert cfg.beams[0].family == "gaussian"
        assert cfg.mode == "truncated-fit"
        assert cfg.seed == 4242

    def test_unknown_key_rejected(self, tmp_path):
        body = BASE_CFG.format(mode="rkhs", solver_extra="gamma = 0.1",
                               noise="0") + "\n[geometry]\nwobble = 3\n"
        body = body.replace("[geometry]\nhalf_width = 20\nspacing = 0.5",
                            "[geometry]\nhalf_width = 20\nspacing = 0.5\nwobble = 3")
        path = tmp_path / "bad.cfg"
        path.write_text(BASE_CFG.format(
            mode="rkhs", solver_extra="gamma = 0.1", noise="0").replace(
            "spacing = 0.5", "spacing = 0.5\nwobble = 3"))
        with pytest.raises(UsageError):
            load_config(path)

    def test_unknown_section_rejected(self, tmp_path):
        path = write_cfg(tmp_path)
        path.write_text(path.read_text() + "\n[extras]\nfoo = 1\n")
        with pytest.raises(UsageError):
            load_config(path)

    def test_unknown_mode_rejected(self, tmp_path):
        with pytest.raises(UsageError):
            load_config(write_cfg(tmp_path, mode="magic"))

    def test_missing_beam_rejected(self, tmp_path):
        path = tmp_path / "nobeam.cfg"
        path.write_text("[geometry]\nhalf_width = 20\nspacing = 0.5\n")
        with pytest.raises(UsageError):
            load_config(path)

    def test_multibeam_sections(self, tmp_path):
        body = BASE_CFG.format(mode="multibeam", solver_extra="gamma = 1e-8",
                               noise="0") + "\n[beam2]\nfamily = gaussian\nsigma = 6.0\n"
        cfg = load_config(write_cfg(tmp_path, body=body))
        assert len(cfg.beams) == 2
        assert cfg.beams[1].sigma == 6.0


class TestSynthCommand:
    def test_deterministic_outputs(self, tmp_path):
        cfg = write_cfg(tmp_path, noise="0.1")
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["synth", "--config", str(cfg), "--out", str(a)]) == 0
        assert main(["synth", "--config", str(cfg), "--out", str(b)]) == 0
        assert (a / "measurement.txt").read_bytes() == \
            (b / "measurement.txt").read_bytes()

    def test_seed_changes_output(self, tmp_path):
        cfg = write_cfg(tmp_path, noise="0.1")
        a, b = tmp_path / "a", tmp_path / "b"
        main(["synth", "--config", str(cfg), "--out", str(a)])
        main(["synth", "--config", str(cfg), "--out", str(b), "--seed", "7"])
        assert (a / "measurement.txt").read_bytes() != \
            (b / "measurement.txt").read_bytes()

    def test_figures_written(self, tmp_path):
        cfg = write_cfg(tmp_path)
        out = tmp_path / "o"
        main(["synth", "--config", str(cfg), "--out", str(out)])
        assert (out / "measurement.png").exists()


class TestSpectrumCommand:
    def test_table_and_manifest(self, tmp_path):
        cfg = write_cfg(tmp_path)
        out = tmp_path / "o"
        assert main(["spectrum", "--config", str(cfg), "--out", str(out)]) == 0
        rows = read_spectrum_table(out / "spectrum.txt")
        assert rows[0][1] < 1.0
        assert all(a[1] >= b[1] for a, b in zip(rows, rows[1:]))
        man = read_manifest(out / "manifest.txt")
        assert 0.9 < man["lambda_1"] < 1.0
        assert (out / "eigvec_000.txt").exists()
        assert (out / "spectrum.png").exists()

    def test_stadium_ground_mode_sign(self, tmp_path):
        body = """
[beam]
family = gaussian
dimension = 2
sigma = 2.0

[geometry]
stadium_width = 10
spacing = 1.0

[io]
output_dir = out
dump_modes = 1
"""
        cfg = write_cfg(tmp_path, body=body)
        out = tmp_path / "o"
        assert main(["spectrum", "--config", str(cfg), "--out", str(out)]) == 0
        data, _ = read_matrix(out / "eigvec_000.txt")
        assert data.min() >= -1e-8 * data.max()

    def test_missing_beam_is_usage_error(self, tmp_path):
        path = tmp_path / "nobeam.cfg"
        path.write_text("[geometry]\nhalf_width = 20\nspacing = 0.5\n")
        assert main(["spectrum", "--config", str(path),
                     "--out", str(tmp_path / "o")]) == 2


class TestSolveCommand:
    def run_synth(self, tmp_path, cfg):
        out = tmp_path / "data"
        assert main(["synth", "--config", str(cfg), "--out", str(out)]) == 0
        return out / "measurement.txt"

    def test_truncated_fit_residual_shrinks_with_modes(self, tmp_path):
        cfg = write_cfg(tmp_path, noise="0.05")
        measurement = self.run_synth(tmp_path, cfg)
        rms = {}
        for n_tr in (3, 6):
            cfg_n = write_cfg(tmp_path, solver_extra=f"n_tr = {n_tr}",
                              noise="0.05", name=f"run{n_tr}.cfg")
            out = tmp_path / f"o{n_tr}"
            assert main(["solve", "--config", str(cfg_n), "--input",
                         str(measurement), "--out", str(out)]) == 0
            rms[n_tr] = read_manifest(out / "manifest.txt")["residual_rms"]
        assert rms[6] < rms[3]

    def test_noiseless_synth_fits_exactly(self, tmp_path):
        cfg = write_cfg(tmp_path, noise="0.0")
        measurement = self.run_synth(tmp_path, cfg)
        out = tmp_path / "o"
        assert main(["solve", "--config", str(cfg), "--input",
                     str(measurement), "--out", str(out)]) == 0
        man = read_manifest(out / "manifest.txt")
        assert man["residual_rms"] <= 1e-6
        assert (out / "etch_map.txt").exists()
        assert (out / "filtered.txt").exists()
        assert (out / "residual.txt").exists()
        assert (out / "etch_map.png").exists()

    def test_noise_floor_band(self, tmp_path):
        cfg = write_cfg(tmp_path, noise="0.1")
        measurement = self.run_synth(tmp_path, cfg)
        out = tmp_path / "o"
        assert main(["solve", "--config", str(cfg), "--input",
                     str(measurement), "--out", str(out)]) == 0
        man = read_manifest(out / "manifest.txt")
        synth_man = read_manifest(tmp_path / "data" / "synth_manifest.txt")
        ratio = man["residual_rms"] / synth_man["signal_rms"]
        assert 0.05 <= ratio <= 0.2

    def test_pseudoinverse_collapses_dumped_mode(self, tmp_path):
        cfg = write_cfg(tmp_path, mode="pseudoinverse",
                        solver_extra="n_tr = 6")
        out_s = tmp_path / "spec"
        main(["spectrum", "--config", str(cfg), "--out", str(out_s)])
        # forward-map the dumped second right vector into a measurement
        import etchmap as em
        from etchmap.spectral import apply_forward, decompose, left_vectors
        from etchmap.matrixio import write_field

        cfg_obj = load_config(cfg)
        dwell, domain = cfg_obj.build_grids()
        t2 = read_field(out_s / "eigvec_001.txt", dwell)
        beam = cfg_obj.beams[0]
        kern = em.assemble_normal_matrix(beam, dwell, domain)
        system = decompose(kern)
        lam2 = system.eigenvalues[1]
        h2 = apply_forward(t2, beam, domain)
        h2 = em.FieldMap(domain, h2.values / np.sqrt(lam2))
        write_field(tmp_path / "h2.txt", h2)
        out = tmp_path / "o"
        assert main(["solve", "--config", str(cfg), "--input",
                     str(tmp_path / "h2.txt"), "--out", str(out)]) == 0
        etch = read_field(out / "etch_map.txt", dwell)
        expect = t2.values / np.sqrt(lam2)
        assert np.max(np.abs(etch.values - expect)) <= \
            1e-6 * np.max(np.abs(expect))

    def test_rbf_nonneg_coefficients(self, tmp_path):
        body = BASE_CFG.format(mode="rbf-nonneg", solver_extra="gamma = 1e-9",
                               noise="0.0").replace("half_width = 20",
                                                    "half_width = 8")
        cfg = write_cfg(tmp_path, body=body)
        measurement = self.run_synth(tmp_path, cfg)
        out = tmp_path / "o"
        assert main(["solve", "--config", str(cfg), "--input",
                     str(measurement), "--out", str(out)]) == 0
        man = read_manifest(out / "manifest.txt")
        assert man["min_coefficient"] >= 0.0
        assert np.all(man["coefficients"] >= 0.0)

    def test_rkhs_mode_runs(self, tmp_path):
        body = BASE_CFG.format(mode="rkhs", solver_extra="gamma = 1e-10",
                               noise="0.0").replace("half_width = 20",
                                                    "half_width = 10")
        cfg = write_cfg(tmp_path, body=body)
        measurement = self.run_synth(tmp_path, cfg)
        out = tmp_path / "o"
        assert main(["solve", "--config", str(cfg), "--input",
                     str(measurement), "--out", str(out)]) == 0
        man = read_manifest(out / "manifest.txt")
        assert man["residual_rms"] < 1e-5

    def test_grid_mismatch_is_input_error(self, tmp_path):
        cfg = write_cfg(tmp_path)
        measurement = self.run_synth(tmp_path, cfg)
        other = write_cfg(tmp_path, name="other.cfg",
                          body=BASE_CFG.format(
                              mode="truncated-fit", solver_extra="n_tr = 4",
                              noise="0").replace("half_width = 20",
                                                 "half_width = 10"))
        assert main(["solve", "--config", str(other), "--input",
                     str(measurement), "--out", str(tmp_path / "o")]) == 2

    def test_missing_input_is_usage_error(self, tmp_path):
        cfg = write_cfg(tmp_path)
        assert main(["solve", "--config", str(cfg), "--input",
                     str(tmp_path / "nope.txt"),
                     "--out", str(tmp_path / "o")]) == 2


class TestMultibeamCommand:
    def multibeam_cfg(self, tmp_path, extra=""):
        body = """
[beam]
family = gaussian
sigma = 2.0

[beam2]
family = gaussian
sigma = 2.0

[geometry]
half_width = 15
spacing = 0.5

[solver]
mode = multibeam
gamma = 1e-6

[io]
output_dir = out
seed = 99

[synth]
modes = 5
noise = 0.0
""" + extra
        return write_cfg(tmp_path, body=body, name="mb.cfg")

    def test_identical_beams_equal_maps(self, tmp_path):
        cfg = self.multibeam_cfg(tmp_path)
        data = tmp_path / "data"
        assert main(["synth", "--config", str(cfg), "--out", str(data)]) == 0
        out = tmp_path / "o"
        assert main(["multibeam", "--config", str(cfg), "--input",
                     str(data / "measurement.txt"), "--out", str(out)]) == 0
        a, _ = read_matrix(out / "etch_map_beam1.txt")
        b, _ = read_matrix(out / "etch_map_beam2.txt")
        assert np.max(np.abs(a - b)) <= 1e-8 * (np.max(np.abs(a)) + 1e-300)
        assert (out / "multibeam.png").exists()

    def test_single_beam_matches_solve(self, tmp_path):
        body = """
[beam]
family = gaussian
sigma = 2.0

[geometry]
half_width = 15
spacing = 0.5

[solver]
mode = multibeam
gamma = 1e-8

[io]
output_dir = out
seed = 99

[synth]
modes = 5
noise = 0.0
"""
        cfg = write_cfg(tmp_path, body=body, name="single.cfg")
        data = tmp_path / "data"
        main(["synth", "--config", str(cfg), "--out", str(data)])
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["multibeam", "--config", str(cfg), "--input",
                     str(data / "measurement.txt"), "--out", str(out_a)]) == 0
        assert main(["solve", "--config", str(cfg), "--input",
                     str(data / "measurement.txt"), "--out", str(out_b)]) == 0
        a, _ = read_matrix(out_a / "etch_map_beam1.txt")
        b, _ = read_matrix(out_b / "etch_map_beam1.txt")
        assert np.array_equal(a, b)


class TestKernelDump:
    def test_dump_roundtrip(self, tmp_path):
        cfg = write_cfg(tmp_path)
        out = tmp_path / "o"
        assert main(["kernel-dump", "--config", str(cfg),
                     "--out", str(out)]) == 0
        data, header = read_matrix(out / "kernel.txt")
        import etchmap as em
        cfg_obj = load_config(cfg)
        dwell, domain = cfg_obj.build_grids()
        kern = em.assemble_normal_matrix(cfg_obj.beams[0], dwell, domain)
        assert np.array_equal(data, kern.matrix)
        assert (out / "kernel.png").exists()


class TestUsage:
    def test_unknown_command(self):
        assert main(["frobnicate"]) == 2

    def test_missing_config(self, tmp_path):
        assert main(["spectrum", "--config", str(tmp_path / "nope.cfg"),
                     "--out", str(tmp_path)]) == 2


class TestExtendedGeometry:
    def test_rectangle_tensor_solve(self, tmp_path):
        body = """
[beam]
family = gaussian
dimension = 2
sigma = 2.0

[geometry]
half_width_x = 12
half_width_y = 6
spacing = 1.0

[solver]
mode = truncated-fit
n_tr = 20

[io]
output_dir = out
seed = 31

[synth]
modes = 20
noise = 0.0
"""
        cfg = write_cfg(tmp_path, body=body)
        data = tmp_path / "data"
        assert main(["synth", "--config", str(cfg), "--out", str(data)]) == 0
        out = tmp_path / "o"
        assert main(["solve", "--config", str(cfg), "--input",
                     str(data / "measurement.txt"), "--out", str(out)]) == 0
        man = read_manifest(out / "manifest.txt")
        assert man["residual_rms"] <= 1e-6
        data2, header = read_matrix(out / "etch_map.txt")
        assert data2.shape[0] > 1 and header["mask"] is False

    def test_mask_file_geometry(self, tmp_path):
        import etchmap as em
        from etchmap.matrixio import write_field

        domain = em.make_stadium_mask(8.0, 1.0)
        mask_field = em.FieldMap(domain, domain.mask.astype(float))
        write_field(tmp_path / "mask.txt", mask_field)
        body = """
[beam]
family = gaussian
dimension = 2
sigma = 2.0

[geometry]
mask_file = mask.txt
spacing = 1.0

[io]
output_dir = out
seed = 5
"""
        cfg = write_cfg(tmp_path, body=body)
        out = tmp_path / "o"
        assert main(["spectrum", "--config", str(cfg), "--out",
                     str(out)]) == 0
        man = read_manifest(out / "manifest.txt")
        assert 0 < man["lambda_1"] < 1.0

    def test_margin_override(self, tmp_path):
        body = BASE_CFG.format(mode="truncated-fit", solver_extra="n_tr = 4",
                               noise="0").replace("spacing = 0.5",
                                                  "spacing = 0.5\nmargin = 6")
        cfg = load_config(write_cfg(tmp_path, body=body))
        dwell, _ = cfg.build_grids()
        assert dwell.lower[0] == pytest.approx(-26.0)

    def test_l_noise_config(self, tmp_path):
        cfg = write_cfg(tmp_path, solver_extra="l_noise = 12", noise="0.0")
        data = tmp_path / "data"
        main(["synth", "--config", str(cfg), "--out", str(data)])
        out = tmp_path / "o"
        assert main(["solve", "--config", str(cfg), "--input",
                     str(data / "measurement.txt"), "--out", str(out)]) == 0
        man = read_manifest(out / "manifest.txt")
        import math
        assert man["truncation_threshold"] == pytest.approx(
            math.exp(-(2 * math.pi / 12.0) ** 2 * 4.0), rel=1e-12)
        assert man["n_tr"] >= 1

    def test_sinc_operator_norm_recorded(self, tmp_path):
        body = """
[beam]
family = sinc_truncation
cutoff = 2.0

[geometry]
half_width = 6
spacing = 0.25

[io]
output_dir = out
dump_modes = 1
"""
        cfg = write_cfg(tmp_path, body=body)
        out = tmp_path / "o"
        assert main(["spectrum", "--config", str(cfg), "--out",
                     str(out)]) == 0
        man = read_manifest(out / "manifest.txt")
        assert np.isfinite(man["operator_norm_estimate"])
        assert man["operator_norm_estimate"] > 0

    def test_tail_diagnostics_written(self, tmp_path):
        cfg = write_cfg(tmp_path)
        out = tmp_path / "o"
        main(["spectrum", "--config", str(cfg), "--out", str(out)])
        text = (out / "tail_diagnostics.txt").read_text()
        assert text.startswith("# n x t_n(x)")

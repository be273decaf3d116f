"""Zero-forcing design residuals, application alignment, end-to-end gains."""

import numpy as np
import pytest

from vvdlab import channel, equalization, estimation, link, metrics
from vvdlab.channel import ArModel, ChannelConfig
from vvdlab.equalization import design_zf, equalize
from vvdlab.estimation import SingularMatrixError, convolution_columns
from vvdlab.types import Cir, Waveform


class TestDesignZf:
    def test_delay_impulse_inverts_exactly(self):
        taps = np.zeros(5, complex)
        taps[2] = 1.0
        eq = design_zf(Cir(taps, 2), length=9, u_index=6)
        hmat = convolution_columns(taps, 9, 13)
        u = np.zeros(13, complex)
        u[6] = 1.0
        assert np.max(np.abs(hmat @ eq.taps - u)) <= 1e-12
        assert eq.residual <= 1e-12

    def test_two_tap_residual_small_and_decreasing_in_length(self):
        h = Cir(np.array([1.0, 0.5], dtype=complex), 0)
        eq16 = design_zf(h, length=16)
        assert eq16.residual < 0.1
        residuals = [design_zf(h, length=L).residual for L in range(4, 33, 4)]
        for a, b in zip(residuals, residuals[1:]):
            assert b <= a + 1e-12

    def test_design_commutes_with_scaling(self, rng):
        h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        base = design_zf(Cir(h, 0), length=12, u_index=7)
        scaled = design_zf(Cir(2.5 * h, 0), length=12, u_index=7)
        assert np.max(np.abs(scaled.taps - base.taps / 2.5)) <= 1e-10

    def test_zero_channel_rejected(self):
        with pytest.raises(SingularMatrixError):
            design_zf(Cir(np.zeros(3, complex) + 0j, 0), length=8)

    def test_first_order_optimality(self, rng):
        h = Cir(rng.standard_normal(5) + 1j * rng.standard_normal(5), 0)
        eq = design_zf(h, length=11)
        rows = 11 + 5 - 1
        hmat = convolution_columns(h.taps, 11, rows)
        u = np.zeros(rows, complex)
        u[eq.u_index] = 1.0
        base = np.linalg.norm(u - hmat @ eq.taps) ** 2
        eps = 1e-6
        for i in range(11):
            for delta in (eps, -eps, 1j * eps, -1j * eps):
                perturbed = eq.taps.copy()
                perturbed[i] += delta
                assert np.linalg.norm(u - hmat @ perturbed) ** 2 >= base - 1e-12


class TestEqualize:
    def test_identity_equalizer_is_identity(self, rng):
        w = Waveform(rng.standard_normal(50) + 1j * rng.standard_normal(50), 4)
        eq = equalization.Equalizer(np.array([1.0 + 0j]), u_index=0)
        assert equalize(w, eq) == w

    def test_pure_delay_compensated(self, rng):
        w = Waveform(rng.standard_normal(30) + 0j, 4)
        taps = np.zeros(5, complex)
        taps[3] = 1.0
        eq = equalization.Equalizer(taps, u_index=3)
        out = equalize(w, eq)
        assert np.allclose(out.samples, w.samples)

    def test_loopback_residual_error(self, noiseless_trace):
        # noiseless equalized frame body error; golden bound from measurement
        rec = noiseless_trace.records[0]
        gt = estimation.ground_truth_estimate(rec)
        eq = design_zf(gt, length=41)
        out = equalize(rec.rx_waveform, eq)
        body = slice(200, len(rec.tx_waveform) - 200)
        err = np.max(np.abs(out.samples[body] - rec.tx_waveform.samples[body]))
        assert err < 1e-3

    def test_noise_amplification_bound(self, rng):
        # ||c|| > 1 amplifies white noise power (Parseval)
        h = Cir(np.array([1.0, 0.9], dtype=complex), 0)
        eq = design_zf(h, length=21)
        gain = float(np.sum(np.abs(eq.taps) ** 2))
        assert gain > 1.0
        noise = rng.standard_normal(20_000) + 1j * rng.standard_normal(20_000)
        out = np.convolve(noise, eq.taps)
        in_power = np.mean(np.abs(noise) ** 2)
        out_power = np.mean(np.abs(out[21 : -21]) ** 2)
        assert out_power >= in_power


class TestEndToEnd:
    def test_zf_beats_standard_on_dispersive_channel(self):
        # constructed channel with echo mass >= main tap: matched-filter
        # decisions break without equalization, ZF restores them
        taps = np.zeros(11, complex)
        taps[0], taps[4], taps[8] = 1.0, 0.8, 0.8
        h = Cir(taps, 0)
        cfg = ChannelConfig(
            pre_cursor_count=0, snr_db=float("inf"), phase_drift_std_rad=0.0, rng_seed=3
        )
        model = ArModel(order=1, phi=[1.0], process_noise_var=0.0)
        tset = channel.generate_trace(cfg, model, 4, base_cir=h)
        std_decoded, zf_decoded, truths = [], [], []
        for rec in tset.records:
            truths.append(metrics.transmitted_psdu(rec))
            std_decoded.append(link.standard_decode(rec).psdu)
            gt = estimation.ground_truth_estimate(rec)
            zf_decoded.append(link.decode_with_estimate(rec, gt, eq_length=41).psdu)
        assert metrics.packet_error_rate(std_decoded, truths) > 0
        assert metrics.packet_error_rate(zf_decoded, truths) == 0

    def test_per_positive_implies_cer_positive(self):
        # chip-decision errors are the only error source here, so packet
        # errors must show up as chip errors too
        taps = np.zeros(11, complex)
        taps[0], taps[4], taps[8] = 1.0, 0.8, 0.8
        cfg = ChannelConfig(
            pre_cursor_count=0, snr_db=float("inf"), phase_drift_std_rad=0.0, rng_seed=9
        )
        model = ArModel(order=1, phi=[1.0], process_noise_var=0.0)
        tset = channel.generate_trace(cfg, model, 3, base_cir=Cir(taps, 0))
        decoded, truths, masks = [], [], []
        for rec in tset.records:
            truths.append(metrics.transmitted_psdu(rec))
            res = link.standard_decode(rec)
            decoded.append(res.psdu)
            masks.append(res.chip_errors)
        per = metrics.packet_error_rate(decoded, truths)
        cer = metrics.chip_error_rate_from_masks(masks)
        assert per > 0
        assert cer > 0

    def test_decode_with_missing_estimate_fails_closed(self, noiseless_trace):
        res = link.decode_with_estimate(noiseless_trace.records[0], None)
        assert res.psdu is None and res.chip_errors is None and not res.ok

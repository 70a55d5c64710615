"""Smoke test for the thermforge Python extension.

Build and install first:  pip install --no-build-isolation ./crates/python
Then run:                 python python/smoke_test.py
"""

import math
import random

import thermforge as tf


def check_radiometry():
    factory = tf.RadiometricParams.factory()
    tuned = tf.RadiometricParams.recalibrated()
    dn = tuned.dn_of_temperature(100.0)
    reading = factory.temperature_of_dn(dn)
    assert 78.0 <= reading <= 88.0, reading
    assert abs(tuned.temperature_of_dn(tuned.dn_of_temperature(25.0)) - 25.0) < 1e-9
    back = tf.RadiometricParams.from_json(tuned.to_json())
    assert (back.r1, back.o) == (tuned.r1, tuned.o)

    frame = [[round(tuned.dn_of_temperature(30.0))] * 4 for _ in range(3)]
    celsius = tf.convert_frame(frame, tuned)
    assert all(abs(c - 30.0) < 0.05 for row in celsius for c in row)


def check_calibration():
    tuned = tf.RadiometricParams.recalibrated()
    pairs = [(tuned.dn_of_temperature(t), t) for t in range(4, 101, 2)]
    report = tf.calibrate(pairs, tf.RadiometricParams.factory())
    assert report.converged
    assert abs(report.params_after.r1 - tuned.r1) / tuned.r1 < 1e-3
    assert report.rmse_after < 1e-3 < report.rmse_before


def check_matching():
    rng = random.Random(3)
    search = [[rng.random() for _ in range(16)] for _ in range(16)]
    template = [row[5:10] for row in search[4:9]]
    scores = tf.ncc_map(search, template)
    assert abs(scores[4][5] - 1.0) < 1e-12
    m = tf.best_match(search, template, scales=[1.0])
    assert (m.x_star, m.y_star, m.accepted) == (5, 4, True)


def check_enhance_and_metrics():
    # a vertical step edge: thermal at 8x6, guide at 4x resolution
    thermal = [[30.0 if x < 4 else 24.0 for x in range(8)] for _ in range(6)]
    rgb = bytearray()
    for _ in range(24):
        for x in range(32):
            rgb += bytes([160, 120, 85] if x < 16 else [45, 140, 45])
    guided, bilinear, offset, score = tf.guided_upsample(thermal, 32, 24, bytes(rgb))
    assert offset == (0, 0) and score > 0.75
    assert len(guided) == 24 and len(guided[0]) == 32
    truth = [[30.0 if x < 16 else 24.0 for x in range(32)] for _ in range(24)]
    flat = lambda img: [v for row in img for v in row]
    assert tf.rmse(flat(guided), flat(truth)) <= tf.rmse(flat(bilinear), flat(truth))

    assert tf.rmse(flat(truth), flat(truth)) == 0.0
    assert abs(tf.ssim(truth, truth, 140.0) - 1.0) < 1e-12
    assert math.isinf(tf.psnr(truth, truth, 140.0))
    assert tf.gradient_energy(truth) > 0.0


def check_losses():
    assert tf.adversarial_loss(0.5) == math.log(2)
    a = [[0.0, 0.0]]
    b = [[1.0, 3.0]]
    assert tf.mse_loss(a, b) == 5.0
    assert tf.identity_loss(a, b) == 5.0
    assert tf.cycle_consistency_loss(a, b) == 2.0
    img = [[float((x * y) % 7) for x in range(5)] for y in range(5)]
    assert tf.content_loss(img, img) == 0.0
    assert abs(tf.total_loss(1, 1, 1, 1, 1, 0.1) - 4.1) < 1e-15
    try:
        tf.adversarial_loss(0.0)
    except ValueError:
        pass
    else:
        raise AssertionError("p = 0 accepted")


if __name__ == "__main__":
    check_radiometry()
    check_calibration()
    check_matching()
    check_enhance_and_metrics()
    check_losses()
    print("python smoke test: ok")

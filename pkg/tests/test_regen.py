import struct
import sys
from pathlib import Path

import numpy as np
import pytest

from morphforge.errors import BackendError, OptimizationError, ResizeRequiredError, ValidationError
from morphforge.imaging import FaceImage
from morphforge.regen import (FitOptions, FixedEncoder, LinearGenerator, PixelPerceptual, RegenBackends,
                              finetune_encoder, fit_latent, latent_interpolation_morph, latent_objective,
                              lbfgs_minimize, mean_reconstruction_loss, perceptual_loss, regen_morph, regenerate,
                              toy_backends)
from morphforge.regen.backends import ConvPerceptual
from morphforge.regen.lbfgs import two_loop
from morphforge.regen.tensorio import (ExternalBackend, decode_request, decode_tensor, encode_request,
                                       encode_tensor, read_tensor, write_tensor)
from morphforge.synthetic import sprite_set

EXACT = FitOptions(learning_rate=1.0, decay_rate=0.5, early_stop_threshold=-np.inf, patience=30,
                   max_iterations=500)


@pytest.fixture(scope="module")
def small_backends():
    return toy_backends(size=16, latent_dim=32, n_sprites=64)


def quadratic(rng, dim, cond=50.0):
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    a = (q * np.geomspace(1.0, cond, dim)) @ q.T
    x_star = rng.normal(size=dim)
    return a, x_star, lambda x: (0.5 * (x - x_star) @ a @ (x - x_star), a @ (x - x_star))


# --------------------------------------------------------------------- optimizer

def test_fit_options_validation():
    with pytest.raises(ValidationError):
        FitOptions(learning_rate=0)
    with pytest.raises(ValidationError):
        FitOptions(decay_rate=1.5)
    assert FitOptions().replace(patience=3).patience == 3


@pytest.mark.parametrize("dim", [1, 7, 64])
def test_lbfgs_solves_quadratics(dim):
    rng = np.random.default_rng(dim)
    _, x_star, f = quadratic(rng, dim)
    res = lbfgs_minimize(f, np.zeros(dim), EXACT)
    assert np.abs(res.x - x_star).max() < 1e-6
    assert res.trace == sorted(res.trace, reverse=True)
    assert res.trace[-1] == res.loss


def test_two_loop_without_memory_is_identity():
    g = np.arange(4.0)
    np.testing.assert_array_equal(two_loop(g, [], []), g)


def test_two_loop_satisfies_secant_condition():
    rng = np.random.default_rng(0)
    a, _, _ = quadratic(rng, 6)
    s = [rng.normal(size=6) for _ in range(3)]
    y = [a @ v for v in s]
    np.testing.assert_allclose(two_loop(y[-1], s, y), s[-1], atol=1e-10)


def test_lbfgs_stops_on_patience_and_threshold():
    res = lbfgs_minimize(lambda x: (1.0, np.ones_like(x)), np.zeros(3), FitOptions(early_stop_threshold=0.0))
    assert res.stop_reason == "patience" and res.iterations == 10
    res = lbfgs_minimize(lambda x: (float(x @ x), 2 * x), np.ones(3), FitOptions(early_stop_threshold=10.0))
    assert res.stop_reason == "threshold" and res.iterations == 0
    res = lbfgs_minimize(lambda x: (float(x @ x), 2 * x), np.ones(3),
                         FitOptions(early_stop_threshold=0.0, max_iterations=3))
    assert res.stop_reason == "max_iterations" and res.iterations == 3


def test_lbfgs_rejects_non_finite_objective():
    with pytest.raises(OptimizationError):
        lbfgs_minimize(lambda x: (np.nan, x), np.zeros(2))
    with pytest.raises(OptimizationError):
        lbfgs_minimize(lambda x: (1.0, np.full_like(x, np.inf)), np.zeros(2))


# --------------------------------------------------------------------- backends and gradients

def _fd_grad(f, z, idx, h=1e-5):
    out = []
    for i in idx:
        e = np.zeros_like(z)
        e[i] = h
        out.append((f(z + e)[0] - f(z - e)[0]) / (2 * h))
    return np.array(out)


def test_toy_objective_gradient_matches_finite_differences(small_backends):
    rng = np.random.default_rng(1)
    target = sprite_set(1, size=16, seed=99)[0]
    f = latent_objective(target, small_backends.generator, small_backends.perceptual)
    z = rng.normal(size=32) * 0.5
    idx = rng.choice(32, 8, replace=False)
    _, g = f(z)
    np.testing.assert_allclose(g[idx], _fd_grad(f, z, idx), rtol=1e-5, atol=1e-9)


def test_finite_difference_fallback_matches_vjp(small_backends):
    gen, phi = small_backends.generator, small_backends.perceptual

    class Opaque:
        def features(self, image):
            return phi.features(image)

    target = sprite_set(1, size=16, seed=5)[0]
    z = np.random.default_rng(2).normal(size=32) * 0.3
    exact = latent_objective(target, gen, phi)(z)[1]
    approx = latent_objective(target, gen, Opaque(), fd_step=1e-5)(z)[1]
    np.testing.assert_allclose(approx, exact, rtol=1e-4, atol=1e-8)


def test_conv_perceptual_vjp_is_adjoint():
    rng = np.random.default_rng(3)
    phi = ConvPerceptual(seed=3)
    img = rng.random((16, 16, 3))
    v = rng.normal(size=phi.features(img).size)
    d = rng.normal(size=img.shape) * 1e-6
    lhs = v @ (phi.features(img + d) - phi.features(img - d)) / 2
    rhs = np.sum(phi.vjp(img, v) * d)
    assert lhs == pytest.approx(rhs, rel=1e-6)


def test_toy_backends_are_deterministic(small_backends):
    again = toy_backends(size=16, latent_dim=32, n_sprites=64)
    assert again.generator.digest() == small_backends.generator.digest()
    fresh = toy_backends.__wrapped__(size=16, latent_dim=32, n_sprites=64)
    assert fresh.generator.digest() == small_backends.generator.digest()
    assert fresh.encoder.digest() == small_backends.encoder.digest()


def test_toy_autoencoder_reconstructs_training_sprites(small_backends):
    enc, gen = small_backends.encoder, small_backends.generator
    sprite = sprite_set(64, size=16, seed=1234)[0]
    recon = gen.generate(enc.encode(sprite))
    assert np.abs(recon.pixels - sprite.pixels).mean() < 0.05


def test_perceptual_loss_checks_lengths():
    class Short:
        def __init__(self):
            self.n = 0

        def features(self, image):
            self.n += 1
            return np.zeros(self.n)

    img = FaceImage(np.zeros((8, 8, 3)))
    with pytest.raises(BackendError):
        perceptual_loss(img, img, Short())


# --------------------------------------------------------------------- fitting

def test_fit_latent_recovers_planted_latent():
    rng = np.random.default_rng(4)
    gen = LinearGenerator.random(24, 12, seed=4)
    z_star = rng.normal(size=24)
    target = gen.generate(z_star)
    enc = FixedEncoder(z_star + rng.normal(0, 0.1, 24), 12)
    z, loss = fit_latent(target, enc, gen, PixelPerceptual(), FitOptions(early_stop_threshold=0.0, max_iterations=500))
    assert np.abs(z - z_star).max() < 1e-3
    assert loss < 1e-10


def test_fit_latent_never_worse_than_encoder(small_backends):
    enc, gen, phi = small_backends.encoder, small_backends.generator, small_backends.perceptual
    target = sprite_set(1, size=16, seed=7)[0]
    start = perceptual_loss(target, gen.generate(enc.encode(target)), phi)
    _, loss = fit_latent(target, enc, gen, phi, FitOptions(early_stop_threshold=0.0, max_iterations=20))
    assert loss <= start


def test_size_mismatch_requires_resize(small_backends):
    big = FaceImage(np.zeros((20, 20, 3)))
    with pytest.raises(ResizeRequiredError):
        regenerate(big, small_backends.encoder, small_backends.generator, small_backends.perceptual)


def test_finetune_keeps_generator_frozen(small_backends):
    enc, gen, phi = small_backends.encoder, small_backends.generator, small_backends.perceptual
    images = sprite_set(6, size=16, seed=11)
    digest = gen.digest()
    enc_digest = enc.digest()
    before = mean_reconstruction_loss(enc, gen, phi, images)
    tuned = finetune_encoder(enc, gen, phi, images, FitOptions(early_stop_threshold=0.0, max_iterations=15))
    assert gen.digest() == digest
    assert enc.digest() == enc_digest
    assert mean_reconstruction_loss(tuned, gen, phi, images) <= before
    with pytest.raises(ValidationError):
        finetune_encoder(enc, gen, phi, [])


def test_regen_and_latent_interp_morphs(small_backends):
    from morphforge.synthetic import face_landmarks, random_identity, render_face

    rng = np.random.default_rng(8)
    faces = [render_face(random_identity(rng), 32, rng=rng) for _ in range(2)]
    opts = FitOptions(max_iterations=5)
    out = regen_morph(faces[0][0], faces[0][1], faces[1][0], faces[1][1], 0.5, small_backends, opts)
    assert out.size == (16, 16)
    a = sprite_set(2, size=16, seed=3)
    mid = latent_interpolation_morph(a[0], a[1], 0.5, small_backends, opts, refine=False)
    z = 0.5 * (small_backends.encoder.encode(a[0]) + small_backends.encoder.encode(a[1]))
    np.testing.assert_allclose(mid.pixels, small_backends.generator.generate(z).pixels)
    with pytest.raises(ValidationError):
        latent_interpolation_morph(a[0], a[1], 2.0, small_backends, opts)
    assert face_landmarks(random_identity(rng), 32).shape == (68, 2)


# --------------------------------------------------------------------- tensor protocol

def test_tensor_layout_is_little_endian_f32():
    data = encode_tensor(np.array([[1.0, 2.0, 3.0]]))
    assert data[:12] == struct.pack("<3I", 2, 1, 3)
    assert data[12:] == struct.pack("<3f", 1.0, 2.0, 3.0)
    arr, end = decode_tensor(data)
    assert end == len(data) and arr.tolist() == [[1.0, 2.0, 3.0]]
    with pytest.raises(BackendError):
        decode_tensor(data[:-1])


def test_request_round_trip_and_validation(tmp_path):
    req = encode_request("generate", "r1", np.zeros(4))
    header, arr = decode_request(req)
    assert header == {"op": "generate", "id": "r1"} and arr.shape == (4,)
    with pytest.raises(BackendError):
        encode_request("train", "x", np.zeros(1))
    with pytest.raises(BackendError):
        decode_request(req + b"\0")
    write_tensor(tmp_path / "t.bin", np.ones((2, 2)))
    assert read_tensor(tmp_path / "t.bin").tolist() == [[1, 1], [1, 1]]


SERVER = """
import sys
import numpy as np
from morphforge.regen.tensorio import decode_request, write_tensor
header, arr = decode_request(open(sys.argv[1], "rb").read())
if header["op"] == "encode":
    out = arr.reshape(-1)[:4]
elif header["op"] == "generate":
    out = np.full((8, 8, 3), float(arr.mean()))
else:
    out = arr.reshape(-1)
write_tensor(sys.argv[2], out)
"""


def test_external_backend_with_script_server(tmp_path):
    script = tmp_path / "server.py"
    script.write_text(SERVER)
    ext = ExternalBackend([sys.executable, str(script)], size=8, latent_dim=4)
    img = FaceImage(np.full((8, 8, 3), 0.25))
    np.testing.assert_allclose(ext.encode(img), [0.25] * 4)
    np.testing.assert_allclose(ext.generate(np.full(4, 0.5)).pixels, 0.5)
    assert ext.features(img).size == 192
    bad = ExternalBackend([sys.executable, str(script)], size=8, latent_dim=5)
    with pytest.raises(BackendError):
        bad.encode(img)
    failing = ExternalBackend([sys.executable, "-c", "import sys; sys.exit(3)"], size=8, latent_dim=4)
    with pytest.raises(BackendError, match="exited with 3"):
        failing.encode(img)


def test_external_toy_server_matches_in_process(monkeypatch):
    monkeypatch.setenv("MORPHFORGE_TOY_SIZE", "16")
    monkeypatch.setenv("MORPHFORGE_TOY_LATENT", "32")
    ext = ExternalBackend([sys.executable, "-m", "morphforge.regen.tensorio"], size=16, latent_dim=32)
    z = np.random.default_rng(0).normal(size=32).astype(np.float32).astype(np.float64)
    # the server builds the default 256-sprite toy set; compare against the same build
    local = toy_backends(size=16, latent_dim=32)
    np.testing.assert_allclose(ext.generate_array(z), local.generator.generate_array(z), atol=1e-6)
    backends = RegenBackends(ext, ext, ext)
    assert backends.size == (16, 16)
    assert Path(ext.argv[0]).exists()

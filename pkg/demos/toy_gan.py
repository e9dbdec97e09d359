# # A generator trained against a Fourier-feature critic
#
# The critic maps 2-D points through four dense layers and a Fourier layer.
# It is updated to increase the divergence between real and generated
# batches, and the generator is updated to decrease it, one step each.

# %%
from repjsd.gan import GanConfig, gan_train, heldout_divergence, mode_coverage

# %% [markdown]
# Coverage counts a ring mode as hit when at least 1% of samples land within
# three standard deviations of its center. Seed 0 covers the full ring; many
# other seeds settle on part of it. 3000 steps take a few minutes on one core.

# %%
cfg = GanConfig(seed=0)


def watch(rec):
    if rec["step"] % 500 == 0:
        print(f"step {rec['step']}: divergence {rec['critic_divergence']:.3f}")


models = gan_train(cfg, on_step=watch)
samples = models.sample(8000, seed=1)
cov = mode_coverage(samples)
print("modes hit:", cov.modes_hit, "of 8")
print("per-mode counts:", cov.histogram)
print(f"KL to uniform over modes: {cov.kl_to_uniform:.3f}")
print(f"held-out divergence: {heldout_divergence(models, 256, seed=2):.3f}")

# %% [markdown]
# # Virtual sensors and the interpolated field
#
# A clustered synthetic network leaves large empty patches. Here we add
# virtual sensors where the network is thin, fill them with a small
# imputation model and compare RBF rasters against the analytic truth.

# %%
import numpy as np

from relmap.dataset import synthesize
from relmap.densify import cvt_energy, densify, invert_density, kde
from relmap.evaluation import ssim_series
from relmap.interpolate import RbfConfig, interpolate
from relmap.model import ModelConfig
from relmap.training import TrainConfig, impute, make_split, train

data = synthesize(n_sensors=60, n_steps=48, seed=4)
net, obs = data.network, data.observations
print(net.n, "sensors,", obs.values.shape[1], "steps")

# %% [markdown]
# Density of the original sensors and the probability of placing a new one.
# The sampling surface is zero wherever the network is already dense.

# %%
d = kde(net, 128)
inside = net.contains(d.centers().reshape(-1, 2)).reshape(d.grid.shape)
dbar = invert_density(d, lam=5.0, theta=0.05, inside=inside)
print("cells eligible for sampling:", int((dbar.grid > 0).sum()), "of", dbar.grid.size)

# %%
dense_net, dense_obs = densify(net, obs, delta=0.4, seed=0)
virtual = ~dense_net.original
print("virtual sensors:", int(virtual.sum()))
print("CVT energy, originals only :", round(cvt_energy(net.coords, net.bounds, 200), 6))
print("CVT energy, with virtual   :", round(cvt_energy(dense_net.coords, net.bounds, 200), 6))

# %% [markdown]
# Virtual rows start empty. A short training run is enough to give them
# plausible values; longer runs (see the benchmark) do better.

# %%
split = make_split(net.n, 0.3, seed=1, window=16)
model = train(net, obs, split, ModelConfig(hidden=16), TrainConfig(epochs=60, eval_every=20))
filled = dense_obs.values.copy()
pred = impute(model, dense_net, dense_obs, visible=dense_net.original)
filled[virtual] = pred[virtual]
dense_obs.values[:] = filled
dense_obs.mask[virtual] = True

# %%
h, w = data.truth.data.shape[1:]
plain = interpolate(net, obs, RbfConfig(), shape=(h, w), bounds=data.truth.bounds)
boosted = interpolate(dense_net, dense_obs, RbfConfig(), shape=(h, w), bounds=data.truth.bounds)
a = np.mean(ssim_series(plain.data, data.truth.data))
b = np.mean(ssim_series(boosted.data, data.truth.data))
print(f"mean SSIM without virtual sensors {a:.3f}, with {b:.3f}")

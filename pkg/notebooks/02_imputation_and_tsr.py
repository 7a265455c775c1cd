# %% [markdown]
# # Filling silent sensors and doubling the frame rate
#
# Half of the sensors are never shown to the network during training. We
# compare its estimates for them against a plain 5-nearest-neighbour average,
# then train a second model that predicts the frames in between.

# %%
import numpy as np

from relmap.dataset import synthesize
from relmap.evaluation import coarsen, knn_impute, linear_tsr
from relmap.model import ModelConfig
from relmap.training import TrainConfig, evaluate_imputation, make_split, rmse_mae, super_resolve, train

data = synthesize(n_sensors=40, n_steps=96, seed=7)
net, obs = data.network, data.observations
split = make_split(net.n, 0.5, seed=1, window=16)

# %%
log = []
model = train(
    net, obs, split, ModelConfig(hidden=16), TrainConfig(epochs=600, eval_every=50),
    on_epoch=lambda rec: log.append(rec),
)
print("loss at start / end:", round(log[0]["loss"], 4), round(log[-1]["loss"], 4))

# %%
visible = np.zeros(net.n, bool)
visible[split.known] = True
hidden_mask = np.zeros_like(obs.mask)
hidden_mask[split.unknown] = obs.mask[split.unknown]
print("model:", evaluate_imputation(model, net, obs, split))
print("knn  :", rmse_mae(knn_impute(net, obs, visible, k=5), obs.values, hidden_mask))

# %% [markdown]
# Temporal super-resolution: the model sees every other frame and fills the
# gaps. Piecewise-linear interpolation in time is the baseline.

# %%
tsr_split = make_split(net.n, 0.0125, seed=1, window=8, unknown_rate=0.2)
tsr = train(net, obs, tsr_split, ModelConfig(hidden=16, t_sr=2), TrainConfig(epochs=600, eval_every=50))
coarse = coarsen(obs, 2)
fine = super_resolve(tsr, net, coarse)
lin = linear_tsr(coarse.values, 2)
steps = lin.shape[1]
# score only the frames the model never saw
inserted = np.ones(steps, bool)
inserted[::2] = False
score = obs.mask[:, :steps] & inserted
print("tsr   :", rmse_mae(fine[:, :steps], obs.values[:, :steps], score))
print("linear:", rmse_mae(lin, obs.values[:, :steps], score))

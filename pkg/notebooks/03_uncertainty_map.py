# %% [markdown]
# # A map that says where not to trust it
#
# The final picture layers the interpolated field, a hatch over regions with
# few sensors and a grid of glyphs summarising how far each cell's readings
# sit from what the network would have predicted for them.

# %%
from pathlib import Path

from relmap.dataset import synthesize
from relmap.interpolate import RbfConfig, interpolate
from relmap.model import ModelConfig
from relmap.render import RenderSpec, render, save_svg
from relmap.training import TrainConfig, make_split, train
from relmap.uncertainty import deviations, glyph_metrics, hatch_opacity, reference_values

data = synthesize(n_sensors=50, n_steps=48, seed=11)
net, obs = data.network, data.observations
model = train(net, obs, make_split(net.n, 0.5, seed=1), ModelConfig(hidden=16), TrainConfig(epochs=60, eval_every=20))

# %% [markdown]
# Reference values come from swapping two halves of the network: each sensor
# is predicted from sensors it was not grouped with.

# %%
t = 20
ref = reference_values(model, net, obs, seed=0)
dev, valid = deviations(obs, ref, timestep=t)
glyphs = glyph_metrics(net, dev, grid_size=6, valid=valid)
print("primary heights (row 0):", glyphs.h_p[0].round(2))

# %%
raster = interpolate(net, obs, RbfConfig(), resolution=96)
hatch = hatch_opacity(net, threshold=0.3, shape=raster.data.shape[1:], bounds=raster.bounds)
doc = render(raster, glyphs, hatch, RenderSpec(width_px=640, title="synthetic field"), timestep=t, boundary=net.boundary)
out = Path("uncertainty_map.svg")
save_svg(out, doc)
print("wrote", out, len(doc), "bytes")

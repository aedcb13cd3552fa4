"""Krippendorff's alpha for Likert-style conversation ratings."""

# %%
import random

from practiq.bench import krippendorff_alpha

# three raters, five conversations, one missing score
ratings = [[5, 5, 4], [4, 4, 4], [2, 3, None], [5, 4, 5], [1, 2, 1]]
for level in ("ordinal", "interval", "nominal"):
    print(f"{level:<9} {krippendorff_alpha(ratings, level):.4f}")

# %% Agreement by chance sits near zero
rng = random.Random(0)
noise = [[rng.randint(1, 5), rng.randint(1, 5)] for _ in range(1000)]
print("uniform noise:", round(krippendorff_alpha(noise), 4))
print("perfect      :", krippendorff_alpha([[3, 3], [1, 1], [5, 5]]))

# Regenerates ratings_noise.csv and prints the reference ICC(A,k) values
# computed with a standalone two-way ANOVA.
import numpy as np


def icc_ak(m):
    m = np.asarray(m, float)
    n, k = m.shape
    g = m.mean()
    ssr = k * ((m.mean(1) - g) ** 2).sum()
    ssc = n * ((m.mean(0) - g) ** 2).sum()
    sse = ((m - g) ** 2).sum() - ssr - ssc
    msr, msc, mse = ssr / (n - 1), ssc / (k - 1), sse / ((n - 1) * (k - 1))
    return (msr - mse) / (msr + (msc - mse) / n)


rng = np.random.default_rng(1)
c = rng.integers(1, 6, size=(50, 5))
d = rng.integers(1, 6, size=(50, 5))
print("complexity", repr(icc_ak(c)), "difficulty", repr(icc_ak(d)))
with open("ratings_noise.csv", "w") as f:
    f.write("item_id,rater_id,complexity,difficulty\n")
    for i in range(50):
        for j in range(5):
            f.write(f"item{i:02d},rater{j},{c[i, j]},{d[i, j]}\n")

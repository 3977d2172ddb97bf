"""PCA score regression versus function-on-scalar regression."""

# dodgekit: epsilon-dodging hyperparameter optimization and intrinsic dimensionality

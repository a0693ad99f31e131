"""Training, search, ablation and the command line."""

# Experiment configuration and orchestration

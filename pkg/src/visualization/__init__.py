# Plot rendering for PD curves, trajectories, lock-in and SER sweeps

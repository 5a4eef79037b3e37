# Costas 4QAM Lab - carrier recovery simulation and analysis
# Version: 1.0.0

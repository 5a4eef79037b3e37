# Signal-level QPSK modem and Costas circuit simulation

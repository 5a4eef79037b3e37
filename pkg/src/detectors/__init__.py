# Phase detector characteristics for the 4QAM Costas loops

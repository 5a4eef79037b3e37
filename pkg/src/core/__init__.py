# Core module for the Costas 4QAM Lab

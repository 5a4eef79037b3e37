# Result export module for the Costas 4QAM Lab

# Phase-domain loop dynamics and lock-in analysis

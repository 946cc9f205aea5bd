# VSTOXX Lab: Heston calibration, VSTOXX futures pricing and flow analysis

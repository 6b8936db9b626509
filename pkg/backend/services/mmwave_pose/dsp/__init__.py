"""FFT chain from IQ cubes to normalized RD/RA spectrogram clips"""

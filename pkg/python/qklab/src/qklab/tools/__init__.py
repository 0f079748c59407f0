"""qklab Tools"""

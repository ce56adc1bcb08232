# RIS Link Simulator Core Module

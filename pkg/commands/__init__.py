# RIS Link Simulator Commands Module

namespace t4d {}

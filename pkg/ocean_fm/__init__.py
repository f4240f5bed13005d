"""ocean-fm: masked-autoencoder foundation model pipeline for ocean-colour tiles."""

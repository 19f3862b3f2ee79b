"""Risk-averse (AVaR) planning for transient total-cost MDPs."""

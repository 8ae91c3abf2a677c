"""Fine-grained energy estimation for MAGIC logic-in-memory on a single crossbar row."""

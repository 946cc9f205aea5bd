# Pricing engines and learners

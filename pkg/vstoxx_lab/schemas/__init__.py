# Pydantic schemas and result containers

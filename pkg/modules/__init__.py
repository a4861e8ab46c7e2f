"""
qipm Modules
Almost-exact quantum interior point method for linear optimization, emulated
classically with a query-cost ledger.
"""

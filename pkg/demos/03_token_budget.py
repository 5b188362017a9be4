"""
Prompt budget of direct versus two-stage selection
==================================================

Count the prompt tokens one decision node costs when every candidate is shown
to the selector, and when a shortlist is shown on top of the retrieval pass.
"""

from agentrec import TokenCostParams
from agentrec.evaluation import token_cost

# a 10,453-tool pool at 100 tokens per tool description
pool = TokenCostParams(N=10453, L=100)
print(f"direct:            {token_cost(pool, 'direct'):>12,}")

# the retrieval pass also reads the whole pool, so the shortlist adds to the bill;
# shown for three context nodes of 40 tokens each
for k in (5, 20, 100):
    p = TokenCostParams(N=10453, K=k, L=100, ctx_nodes=3, L_g=40)
    print(f"two-stage, K={k:<4d} {token_cost(p, 'two_stage'):>12,}")

# graph candidates: M subgraphs of s nodes, L_s tokens per node
graphs = TokenCostParams(M=500, K_g=10, s=4, L_s=30, ctx_nodes=0, L_g=0)
print(f"direct graphs:     {token_cost(graphs, 'direct_graph'):>12,}")
print(f"two-stage graphs:  {token_cost(graphs, 'two_stage_graph'):>12,}")

# averages from a corpus give fractional counts; expected mode keeps them
print("expected:", token_cost(TokenCostParams(N=10453.22, L=100), "direct", expected=True))

"""
Rater agreement and engagement correlations
===========================================
"""

from pollstrat import cohens_kappa, fleiss_kappa, pearson

# Two annotators labelling four accounts as bot (Y) or not (N).
print("Cohen:", cohens_kappa(list("YYYN"), list("YYNN")))

# Three raters per item; every cell must be filled.
ratings = [["bot", "bot", "bot"], ["human", "human", "bot"], ["human", "human", "human"], ["bot", "bot", "bot"]]
print("Fleiss:", round(fleiss_kappa(ratings), 4))

# Votes against retweets for a handful of polls.
votes = [120, 450, 80, 3000, 960, 40]
retweets = [3, 11, 1, 70, 20, 2]
r, p = pearson(list(zip(votes, retweets)))
print(f"votes vs retweets: r={r:.3f} (p={p:.2g})")

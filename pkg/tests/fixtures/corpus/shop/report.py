from typing import Dict, List, Set

from shop.models import Cart
from shop.pricing import apply_tax


def summarize(carts: List[Cart], region: str) -> Dict[str, float]:
    out: Dict[str, float] = {}
    for cart in carts:
        out[cart.owner] = apply_tax(cart, region)
    return out


def owners(carts: List[Cart]) -> Set[str]:
    seen: Set[str] = set()
    for cart in carts:
        seen.add(cart.owner)
    return seen


def busiest(carts: List[Cart]) -> Cart:
    top: Cart = carts[0]
    for cart in carts:
        if len(cart.items) > len(top.items):
            top = cart
    return top


def is_empty(cart: Cart) -> bool:
    empty: bool = len(cart.items) == 0
    return empty

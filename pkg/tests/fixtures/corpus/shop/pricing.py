from typing import Dict, List, Tuple

from shop.models import Cart, Item


def tax_rate(region: str) -> float:
    rates: Dict[str, float] = {"eu": 0.2, "us": 0.07}
    return rates.get(region, 0.0)


def apply_tax(cart: Cart, region: str) -> float:
    base = cart.total()
    rate: float = tax_rate(region)
    return base * (1 + rate)


def cheapest(items: List[Item]) -> Item:
    best: Item = items[0]
    for it in items:
        if it.price < best.price:
            best = it
    return best


def split_price(value: float) -> Tuple[int, int]:
    whole: int = int(value)
    cents: int = round((value - whole) * 100)
    return whole, cents


def label_for(item: Item, currency: str) -> str:
    whole, cents = split_price(item.price)
    text: str = f"{item.sku}: {whole}.{cents:02d} {currency}"
    return text

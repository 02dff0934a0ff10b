use super::ast::{self, Func, Node, Var};

/// Exact partial derivative of `node` with respect to `var`.
pub(crate) fn derivative(node: &Node, var: Var) -> Node {
    match node {
        Node::Const(_) => Node::Const(0.0),
        Node::Var(v) => Node::Const(if *v == var { 1.0 } else { 0.0 }),
        Node::Neg(a) => ast::neg(derivative(a, var)),
        Node::Add(a, b) => ast::add(derivative(a, var), derivative(b, var)),
        Node::Sub(a, b) => ast::sub(derivative(a, var), derivative(b, var)),
        Node::Mul(a, b) => ast::add(
            ast::mul(derivative(a, var), (**b).clone()),
            ast::mul((**a).clone(), derivative(b, var)),
        ),
        Node::Div(a, b) => {
            let da = derivative(a, var);
            let db = derivative(b, var);
            if ast::constant(&db) == Some(0.0) {
                return ast::div(da, (**b).clone());
            }
            ast::div(
                ast::sub(ast::mul(da, (**b).clone()), ast::mul((**a).clone(), db)),
                ast::pow((**b).clone(), 2),
            )
        }
        Node::Pow(a, k) => {
            let da = derivative(a, var);
            ast::mul(ast::mul(Node::Const(*k as f64), ast::pow((**a).clone(), k - 1)), da)
        }
        Node::Call(func, a) => {
            let da = derivative(a, var);
            if ast::constant(&da) == Some(0.0) {
                return Node::Const(0.0);
            }
            let inner = (**a).clone();
            let outer = match func {
                Func::Sin => ast::call(Func::Cos, inner),
                Func::Cos => ast::neg(ast::call(Func::Sin, inner)),
                Func::Exp => ast::call(Func::Exp, inner),
                Func::Log => return ast::div(da, inner),
                Func::Sqrt => {
                    return ast::div(da, ast::mul(Node::Const(2.0), ast::call(Func::Sqrt, inner)));
                }
            };
            ast::mul(outer, da)
        }
        Node::Atan2(y, x) => {
            // d atan2(y, x) = (x dy - y dx) / (x^2 + y^2), singular where x = y = 0
            let dy = derivative(y, var);
            let dx = derivative(x, var);
            let numerator = ast::sub(ast::mul((**x).clone(), dy), ast::mul((**y).clone(), dx));
            if ast::constant(&numerator) == Some(0.0) {
                return Node::Const(0.0);
            }
            let radius2 = ast::add(ast::pow((**x).clone(), 2), ast::pow((**y).clone(), 2));
            ast::div(numerator, radius2)
        }
    }
}
